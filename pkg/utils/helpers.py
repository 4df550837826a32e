import math
import pytz
import numpy as np
from datetime import datetime
from typing import List, Optional
from config.settings import settings


def spawn_generators(seed: Optional[int], n: int) -> List[np.random.Generator]:
    """Independent generators counter-seeded from a master seed"""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(child) for child in children]


def format_sig(value, digits: int = 6):
    """Round to significant digits; non-finite values become strings"""
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        return 'nan' if math.isnan(value) else ('inf' if value > 0 else '-inf')
    return float(f"{value:.{digits}g}")


def format_datetime(format_type: str, dt: Optional[datetime] = None) -> str:
    """Format datetime in the configured report timezone"""
    if dt is None:
        dt = datetime.utcnow()

    utc = pytz.UTC
    report_tz = pytz.timezone(settings.TIMEZONE)

    if dt.tzinfo is None:
        dt = utc.localize(dt)

    local_dt = dt.astimezone(report_tz)

    if format_type == 'time':
        return local_dt.strftime("%H:%M:%S")
    elif format_type == 'date':
        return local_dt.strftime("%Y-%m-%d")
    else:
        return local_dt.strftime("%Y-%m-%d %H:%M:%S %Z")


def setup_logging():
    """Setup logging configuration"""
    import logging
    import logging.handlers
    import os

    # Create logs directory if it doesn't exist
    os.makedirs(settings.LOG_DIR, exist_ok=True)

    # Main application logger
    main_logger = logging.getLogger()
    main_logger.setLevel(getattr(logging, settings.LOG_LEVEL.upper()))

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # Main log file handler with rotation
    main_handler = logging.handlers.TimedRotatingFileHandler(
        filename=os.path.join(settings.LOG_DIR, 'msml.log'),
        when='midnight',
        interval=1,
        backupCount=7,
        encoding='utf-8'
    )
    main_handler.setFormatter(formatter)
    main_logger.addHandler(main_handler)

    # Convergence and acceptance warnings get their own file
    diagnostics_logger = logging.getLogger('diagnostics')
    diagnostics_handler = logging.handlers.TimedRotatingFileHandler(
        filename=os.path.join(settings.LOG_DIR, 'diagnostics.log'),
        when='midnight',
        interval=1,
        backupCount=7,
        encoding='utf-8'
    )
    diagnostics_handler.setFormatter(formatter)
    diagnostics_logger.addHandler(diagnostics_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler.setLevel(getattr(logging, settings.LOG_CONSOLE_LEVEL.upper()))
    main_logger.addHandler(console_handler)

    logging.info("Logging system initialized")
