"""
Logging Configuration Module

This module defines the configuration for the toolkit's logging system.
It provides a consistent logging setup that can be used across the services.
Console output goes to stderr so stdout stays free for command results.
"""

import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Optional

# Configuración base para todos los loggers
LOG_LEVEL = logging.INFO
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# Directorio para los archivos de log (None = solo consola)
LOGS_DIR: Optional[str] = None


def setup_logging(level: int = logging.INFO, log_dir: Optional[str] = None) -> None:
    """
    Configure level and destination for every logger created by get_logger.

    Loggers that already exist are reconfigured in place.

    Args:
        level: Logging level (e.g. logging.DEBUG)
        log_dir: Directory for per-module rotating log files, None for console only
    """
    global LOG_LEVEL, LOGS_DIR
    LOG_LEVEL = level
    LOGS_DIR = log_dir
    if log_dir and not os.path.exists(log_dir):
        os.makedirs(log_dir)

    for name, logger in list(logging.Logger.manager.loggerDict.items()):
        if isinstance(logger, logging.Logger) and getattr(logger, "_advobj_configured", False):
            for handler in list(logger.handlers):
                logger.removeHandler(handler)
                handler.close()
            _configure(logger, name)


def get_logger(name: str) -> logging.Logger:
    """
    Get a configured logger with the specified name.

    Args:
        name (str): Name for the logger, typically the service name

    Returns:
        logging.Logger: Configured logger instance
    """
    logger = logging.getLogger(name)

    # Evitar agregar múltiples handlers si el logger ya está configurado
    if logger.handlers:
        return logger

    _configure(logger, name)
    return logger


def _configure(logger: logging.Logger, name: str) -> None:
    logger.setLevel(LOG_LEVEL)
    formatter = logging.Formatter(LOG_FORMAT, LOG_DATE_FORMAT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # Cada módulo tiene su propio archivo de log
    if LOGS_DIR:
        module_name = name.split('.')[-1]
        file_handler = RotatingFileHandler(
            os.path.join(LOGS_DIR, f"{module_name}.log"),
            maxBytes=10485760,  # 10MB
            backupCount=5
        )
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    # Evitar propagar logs al logger raíz para prevenir duplicados
    logger.propagate = False
    logger._advobj_configured = True
