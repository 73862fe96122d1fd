from django.contrib import admin
from django.urls import path

# The admin is the only web surface: it browses the SimulationRun registry.
urlpatterns = [
    path("admin/", admin.site.urls),
]
