import logging
import coloredlogs
import os

LEVELS = {
    'off': logging.CRITICAL + 10,
    'info': logging.INFO,
    'trace': logging.DEBUG,
}

def setup_logging(level_name: str = None):
    """
    Sets up the solver suite logger with colored console output and file logging.

    The level comes from QPS_LOG (off | info | trace); trace shows per-iteration lines.
    """
    logger = logging.getLogger('QPS')
    if level_name is None:
        level_name = os.getenv("QPS_LOG", "info")
    level = LEVELS.get(level_name.strip().lower(), logging.INFO)
    logger.setLevel(level)

    # Prevent the root logger from handling messages
    logger.propagate = False

    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    # Remove any existing handlers to avoid duplicate logs
    if logger.hasHandlers():
        logger.handlers.clear()

    field_styles = coloredlogs.DEFAULT_FIELD_STYLES
    level_styles = {
        'debug': {'color': 'blue'},
        'info': {'color': 'white'},
        'warning': {'color': 'yellow'},
        'error': {'color': 'red'},
        'critical': {'color': 'red', 'bold': True}
    }

    # Console goes to stderr so stdout stays reserved for results
    coloredlogs.install(
        level=level,
        logger=logger,
        fmt=log_format,
        field_styles=field_styles,
        level_styles=level_styles
    )

    # --- File Handler ---
    log_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'logs')
    try:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(log_dir, 'qps.log'), mode='a')
        file_handler.setFormatter(logging.Formatter(log_format))
        file_handler.setLevel(level)
        logger.addHandler(file_handler)
    except OSError as e:
        logger.warning(f"File logging disabled, could not open {log_dir}: {e}")

    return logger

def set_level(level_name: str):
    """Re-applies a QPS_LOG style level name to every handler of the logger."""
    level = LEVELS.get(level_name.strip().lower(), logging.INFO)
    log.setLevel(level)
    for handler in log.handlers:
        handler.setLevel(level)

# Create a logger instance to be imported by other modules
log = setup_logging()
