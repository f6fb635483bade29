from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="NOISEGEN_", env_file=".env", extra="ignore")

    # Chargement des données
    num_workers: int = Field(default=0, ge=0)  # NOISEGEN_NUM_WORKERS
    prefetch_factor: int = Field(default=2, ge=1)  # taille de la file bornée par worker

    # Calcul
    device: str = "cpu"
    log_level: str = "INFO"

    # Sorties
    preview_scale: float = 10.0  # amplification du bruit dans les aperçus PNG
    checkpoint_format_version: int = 1


settings = Settings()
