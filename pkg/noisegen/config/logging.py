import logging

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s: %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """Configure le logger racine une seule fois (appelé par le CLI et les scripts)"""
    logging.basicConfig(format=LOG_FORMAT, level=level.upper(), datefmt="%H:%M:%S")
    # Les bibliothèques tierces restent discrètes
    logging.getLogger("PIL").setLevel(logging.WARNING)
