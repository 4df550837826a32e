import os
from dotenv import load_dotenv

load_dotenv()

_CONFIG_DIR = os.path.dirname(os.path.abspath(__file__))


class Settings:
    # Logging Configuration
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_CONSOLE_LEVEL = os.getenv('LOG_CONSOLE_LEVEL', 'WARNING')
    LOG_DIR = os.getenv('LOG_DIR', './logs')

    # Report Settings
    TIMEZONE = os.getenv('TIMEZONE', 'UTC')

    # Run Configuration
    # MSML_SEED is the only environment override of a run configuration key
    SEED = os.getenv('MSML_SEED')

    # File Paths
    DEFAULT_CONFIG_FILE = os.getenv('DEFAULT_CONFIG_FILE', os.path.join(_CONFIG_DIR, 'defaults.yaml'))
    TEMPLATES_FILE = os.getenv('TEMPLATES_FILE', os.path.join(_CONFIG_DIR, 'templates.yaml'))

    @classmethod
    def seed_override(cls):
        """Seed from MSML_SEED, or None when unset"""
        if cls.SEED is None or cls.SEED.strip() == '':
            return None
        return int(cls.SEED)

    @classmethod
    def validate(cls):
        """Validate settings"""
        levels = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')
        bad = [key for key in ('LOG_LEVEL', 'LOG_CONSOLE_LEVEL') if getattr(cls, key).upper() not in levels]
        if bad:
            raise ValueError(f"Invalid log level for: {', '.join(bad)}")

        if cls.SEED is not None and cls.SEED.strip() != '':
            try:
                int(cls.SEED)
            except ValueError:
                raise ValueError(f"MSML_SEED must be an integer, got {cls.SEED!r}")


settings = Settings()
