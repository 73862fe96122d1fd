import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from phy.services.alist import read_alist
from phy.services.coding import build_code


class GenerateAlistCommandTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.out = Path(self._tmp.name)

    def test_writes_the_built_in_construction(self):
        stdout = StringIO()
        call_command('generate_alist', rates='1/2', lengths='96', out=str(self.out), stdout=stdout)
        path = self.out / 'r1-2_n96.alist'
        self.assertTrue(path.exists())
        expected = build_code('1/2', 96).parity_check
        self.assertEqual((read_alist(path) != expected).nnz, 0)
        self.assertIn('Wrote 1 alist files', stdout.getvalue())

    def test_bad_rates_are_a_usage_error(self):
        with self.assertRaises(CommandError) as caught:
            call_command('generate_alist', rates='half', out=str(self.out), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
