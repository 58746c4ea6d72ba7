from django.apps import AppConfig


class CoreConfig(AppConfig):
    name = "metagen.core"

    def ready(self):
        # Import the generator registry so every model kind is registered at
        # startup; a checkpoint naming an unknown kind then fails at load
        # rather than halfway through an evaluation.
        import metagen.core.generators  # noqa: F401, PLC0415 - populate the kind registry inside ready()
