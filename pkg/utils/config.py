import os
import json
from .logger import log, set_level

def setup_os(config_path: str = None):
    """
    Reads configuration from config.json and sets environment variables.

    Nested keys are flattened: {"liasm": {"sigma": 1e4}} becomes LIASM_SIGMA.
    A missing file is fine (built-in defaults apply); a malformed one is not.
    """
    def set_env_vars(config_dict, prefix=''):
        for key, value in config_dict.items():
            new_key = f"{prefix.upper()}_{key.upper()}" if prefix else key.upper()
            if isinstance(value, dict):
                set_env_vars(value, new_key)
            else:
                os.environ[new_key] = str(value)

    if config_path is None:
        config_path = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'config.json'))
    try:
        with open(config_path, 'r') as f:
            config = json.load(f)
        if not isinstance(config, dict):
            log.critical(f"Error: {config_path} must hold a JSON object.")
            return False
        set_env_vars(config)
        log.debug(f"Environment variables set up from {config_path}.")
    except FileNotFoundError:
        log.debug(f"No config file at {config_path}, using defaults.")
    except json.JSONDecodeError:
        log.critical(f"Error: Could not decode {config_path}.")
        return False

    if os.getenv("QPS_LOG"):
        set_level(os.environ["QPS_LOG"])
    return True

def env_str(name: str, default: str) -> str:
    value = os.getenv(name)
    return default if value is None or value == '' else value

def env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    if value is None or value == '':
        return default
    try:
        return float(value)
    except ValueError:
        log.error(f"Invalid {name} in environment variables: {value}. Must be a number.")
        return default

def env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value == '':
        return default
    try:
        return int(float(value))
    except ValueError:
        log.error(f"Invalid {name} in environment variables: {value}. Must be an integer.")
        return default
