from django.urls import path

from . import views

app_name = "evolution"

urlpatterns = [
    path("runs/", views.SearchRunListView.as_view(), name="runs"),
    path("runs/<uuid:pk>/", views.SearchRunDetailView.as_view(), name="run-detail"),
    path("runs/<uuid:pk>/individuals/", views.IndividualListView.as_view(), name="individuals"),
    path("health/", views.HealthCheckView.as_view(), name="health"),
]
