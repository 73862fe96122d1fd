"""
PDF run summary: headline throughput, per-UE results, CER and MCS
distributions and the detector-selection confusion matrix.
"""
from pathlib import Path

from django.conf import settings
from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

HEADER_BLUE = colors.HexColor('#3498db')
TEXT_DARK = colors.HexColor('#2c3e50')

BASE_TABLE_STYLE = [
    ('BACKGROUND', (0, 0), (-1, 0), HEADER_BLUE),
    ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
    ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
    ('FONTSIZE', (0, 0), (-1, 0), 9),
    ('FONTSIZE', (0, 1), (-1, -1), 8),
    ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
    ('GRID', (0, 0), (-1, -1), 0.5, colors.grey),
    ('VALIGN', (0, 0), (-1, -1), 'MIDDLE'),
    ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, colors.lightgrey]),
]

# cap on per-UE rows so large runs still give a short report
MAX_UE_ROWS = 60


def get_cer_status(cer: float, target: float):
    """Colour a realized CER against the target"""
    if cer != cer:
        return ('n/a', colors.gray)
    if cer <= target:
        return ('On target', colors.green)
    if cer <= 3 * target:
        return ('Near', colors.orange)
    return ('Above', colors.red)


def _styles():
    styles = getSampleStyleSheet()
    return {
        'title': ParagraphStyle(
            'RunTitle', parent=styles['Heading1'], fontSize=20, textColor=colors.HexColor('#1a1a1a'),
            spaceAfter=20, alignment=TA_CENTER, fontName='Helvetica-Bold',
        ),
        'heading': ParagraphStyle(
            'RunHeading', parent=styles['Heading2'], fontSize=14, textColor=TEXT_DARK,
            spaceAfter=10, spaceBefore=16, fontName='Helvetica-Bold',
        ),
        'body': ParagraphStyle('RunBody', parent=styles['BodyText'], fontSize=9, textColor=TEXT_DARK, spaceAfter=6),
    }


def _table(data, col_widths=None, extra=()):
    table = Table(data, colWidths=col_widths)
    table.setStyle(TableStyle(BASE_TABLE_STYLE + list(extra)))
    return table


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return '-'
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def generate_run_report(runs, path, title: str = None, agreement: dict = None) -> Path:
    """
    Write a PDF summary of one or more RunResults (e.g. a full and an
    abstracted run of the same scenario).

    Args:
        runs: list of RunResult
        path: output PDF path
        title: report title, default the scenario name
        agreement: optional summary dict from outputs.agreement

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = runs[0].config
    styles = _styles()
    doc = SimpleDocTemplate(str(path), pagesize=A4, topMargin=0.75 * inch, bottomMargin=0.75 * inch)
    story = [
        Paragraph(title or f"linksim run: {cfg.name}", styles['title']),
        Paragraph(
            f"Scheme {cfg.scheme}, detectors {', '.join(s.name for s in cfg.detectors)}, "
            f"{cfg.drops} drop(s) x {cfg.slots} slots, seed {cfg.seed}, target CER {cfg.target_cer:g}, "
            f"linksim {settings.LINKSIM_VERSION}",
            styles['body'],
        ),
        Spacer(1, 0.2 * inch),
    ]

    # headline numbers
    story.append(Paragraph("Throughput", styles['heading']))
    data = [['Mode', 'AM (Mbps)', 'GM (Mbps)', 'AM 90% CI', 'Users', 'Selection accuracy']]
    for run in runs:
        report = run.report
        data.append([
            run.mode, _fmt(report.am), _fmt(report.gm),
            f"[{_fmt(report.am_ci[0])}, {_fmt(report.am_ci[1])}]", report.users,
            _fmt(report.selection_accuracy) if report.selection_accuracy is not None else '-',
        ])
    story.append(_table(data))

    if agreement:
        story.append(Paragraph("Full vs abstracted", styles['heading']))
        data = [['Metric', 'Value']] + [[key, _fmt(value)] for key, value in agreement.items()]
        story.append(_table(data, col_widths=[2.5 * inch, 1.5 * inch]))

    for run in runs:
        report = run.report
        story.append(Paragraph(f"Per-UE results ({run.mode})", styles['heading']))
        data = [['Drop', 'UE', 'TP (Mbps)', 'CER', 'Status']]
        statuses = []
        for drop in run.drops:
            throughput = drop.throughput(cfg.slots, cfg.t_slot, run.mode)
            cer = drop.ue_cer(run.mode)
            for i in range(drop.num_ue):
                status, color = get_cer_status(cer[i], cfg.target_cer)
                data.append([drop.drop, i, _fmt(throughput[i]), _fmt(cer[i], 3), status])
                statuses.append(color)
        shown = data[:MAX_UE_ROWS + 1]
        # status colours per row
        extra = [
            ('TEXTCOLOR', (4, row), (4, row), color)
            for row, color in enumerate(statuses[:MAX_UE_ROWS], start=1)
        ]
        story.append(_table(shown, extra=extra))
        if len(data) > len(shown):
            story.append(Paragraph(f"{len(data) - len(shown)} more rows in metrics.csv", styles['body']))

        q, values = report.mcs_curve
        story.append(Paragraph(f"MCS percentiles ({run.mode})", styles['heading']))
        story.append(_table([['Percentile'] + [f"{p:g}" for p in q], ['MCS index'] + [_fmt(v, 3) for v in values]]))

        if report.confusion is not None:
            story.append(Paragraph(f"Detector selection ({run.mode})", styles['heading']))
            names = report.detector_names
            data = [['best \\ selected'] + names]
            data += [[name] + [f"{v:.3f}" for v in row] for name, row in zip(names, report.confusion)]
            story.append(_table(data))

    doc.build(story)
    return path
