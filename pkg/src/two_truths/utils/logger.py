"""Logging configuration for two-truths - UTF-8 safe console plus optional file"""
import copy
import logging
import os
import sys

LOG_LEVEL_ENV = "TWO_TRUTHS_LOG_LEVEL"


# ==========================================================
#  UTF-8 SAFE CONSOLE
# ==========================================================
def _ensure_utf8_console():
    """Force UTF-8 output so CSV previews and Greek symbols survive"""
    try:
        if hasattr(sys.stdout, "reconfigure"):
            sys.stdout.reconfigure(encoding="utf-8")
        if hasattr(sys.stderr, "reconfigure"):
            sys.stderr.reconfigure(encoding="utf-8")
    except Exception:
        pass
    os.environ.setdefault("PYTHONIOENCODING", "utf-8")


_ensure_utf8_console()


# ==========================================================
#  COLORED FORMATTER
# ==========================================================
class ColoredFormatter(logging.Formatter):
    """Colorized output for console logs"""

    COLORS = {
        "DEBUG": "\033[36m",      # Cyan
        "INFO": "\033[32m",       # Green
        "WARNING": "\033[33m",    # Yellow
        "ERROR": "\033[31m",      # Red
        "CRITICAL": "\033[35m",   # Magenta
    }
    RESET = "\033[0m"

    def format(self, record):
        # the record is shared with the file handler, color a copy only
        record = copy.copy(record)
        color = self.COLORS.get(record.levelname, self.RESET)
        record.levelname = f"{color}{record.levelname}{self.RESET}"
        return super().format(record)


def resolve_level(level=None):
    """Turn a level name, number or None (environment default) into a logging level"""
    if level is None:
        level = os.environ.get(LOG_LEVEL_ENV, "INFO")
    if isinstance(level, int):
        return level
    resolved = logging.getLevelName(str(level).strip().upper())
    if not isinstance(resolved, int):
        raise ValueError(f"Unknown log level: {level}")
    return resolved


# ==========================================================
#  LOGGER FACTORY
# ==========================================================
def setup_logger(name="two_truths", level=None, log_file=None):
    """Setup a UTF-8-safe, colored logger with optional file output"""
    level = resolve_level(level)
    logger = logging.getLogger(name)
    logger.setLevel(level)

    for handler in logger.handlers:
        handler.setLevel(level)

    if not any(getattr(h, "_two_truths_console", False) for h in logger.handlers):
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler._two_truths_console = True
        console_handler.setLevel(level)
        console_handler.setFormatter(
            ColoredFormatter(
                "%(asctime)s %(levelname)-8s [%(name)s] %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
        logger.addHandler(console_handler)

    open_files = {getattr(h, "baseFilename", None) for h in logger.handlers}
    if log_file and os.path.abspath(log_file) not in open_files:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(level)
        file_handler.setFormatter(
            logging.Formatter(
                "%(asctime)s %(levelname)-8s [%(name)s] %(funcName)s:%(lineno)d - %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
        logger.addHandler(file_handler)

    return logger


def get_logger(name="two_truths"):
    """Get a logger under the two_truths hierarchy"""
    return logging.getLogger(name)
