import logging
import os
from typing import Dict, Optional

# --- Global Helper ---
def _print(statement: str, verbose: bool = True):
    """Prints the statement if verbose is True."""
    if verbose:
        print(statement)


ENV_LOG_LEVEL = "BLOCKMIX_LOG_LEVEL"
DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# every AppLogger built in this process, keyed by logger name
_REGISTRY: Dict[str, "AppLogger"] = {}


class DirectoryCreationError(Exception):
    """Custom exception for errors during directory creation."""
    pass


def _checkDirectory(dir_path: str, pardir: str = None, verbose: bool = False) -> str:
    """
    Checks if a directory exists. If not, creates it.
    If dir_path is relative, it's resolved against pardir (or os.getcwd() if pardir is None).

    Args:
        dir_path (str): The directory path to check/create.
        pardir (str, optional): The parent directory for relative paths.
        verbose (bool): Print what happened.

    Returns:
        str: The absolute, normalized path to the directory.

    Raises:
        DirectoryCreationError: If the directory cannot be created.
    """
    dir_path = os.fspath(dir_path)
    if not os.path.isabs(dir_path):
        target_path = os.path.join(pardir or os.getcwd(), dir_path)
    else:
        target_path = dir_path
    target_path = os.path.normpath(target_path)

    if not os.path.isdir(target_path):
        _print(f"Creating new directory at {target_path}", verbose)
        try:
            os.makedirs(target_path, exist_ok=True)
        except OSError as e:
            raise DirectoryCreationError(f"Unable to create directory {target_path}\n\t{e}")
    return target_path


def level_from_env(default: int = logging.WARNING) -> int:
    """Reads BLOCKMIX_LOG_LEVEL ("DEBUG", "INFO", ... or a number)."""
    raw = os.environ.get(ENV_LOG_LEVEL)
    if not raw:
        return default
    if raw.isdigit():
        return int(raw)
    level = logging.getLevelName(raw.upper())
    return level if isinstance(level, int) else default


class InitLogger:
    """
    Base class with helper methods for initializing logger components.
    """

    def _prepare_handler(self, handler: logging.Handler, level: int,
                         log_format: str, date_format: str) -> logging.Handler:
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(fmt=log_format, datefmt=date_format))
        return handler

    def _add_handler_to_logger(self, logger: logging.Logger, handler: logging.Handler,
                               verbose: bool = False) -> None:
        """Adds a handler to a logger, skipping one that writes to the same file or stream."""
        for h in logger.handlers:
            if type(h) is not type(handler):
                continue
            same_file = getattr(h, "baseFilename", None) == getattr(handler, "baseFilename", None)
            same_stream = getattr(h, "stream", None) is getattr(handler, "stream", None)
            if (isinstance(handler, logging.FileHandler) and same_file) or \
                    (not isinstance(handler, logging.FileHandler) and same_stream):
                _print(f"Handler {type(handler).__name__} already attached to '{logger.name}'.", verbose)
                handler.close()
                return
        logger.addHandler(handler)


class AppLogger(InitLogger):
    """
    A configurable logger that writes messages to a file and/or to the console.

    Manages a single named ``logging.Logger``. When ``log_level`` is None the
    level is taken from the BLOCKMIX_LOG_LEVEL environment variable.
    """

    def __init__(self,
                 logger_name: str,
                 log_level: Optional[int] = None,
                 log_directory: Optional[str] = "logs",
                 log_file_name: Optional[str] = None,
                 log_file_extension: str = ".log",
                 log_format: str = DEFAULT_FORMAT,
                 date_format: str = DEFAULT_DATE_FORMAT,
                 log_to_console: bool = True,
                 clear_existing_handlers: bool = True,
                 verbose: bool = True):
        self.logger_name = logger_name
        self.log_level = log_level if log_level is not None else level_from_env()
        self.verbose = verbose
        self.log_format = log_format
        self.date_format = date_format

        self.logger = logging.getLogger(logger_name)
        self.logger.setLevel(self.log_level)

        if clear_existing_handlers and self.logger.hasHandlers():
            for handler_to_remove in self.logger.handlers[:]:
                self.logger.removeHandler(handler_to_remove)
                handler_to_remove.close()

        self.file_handler = None
        if log_directory:
            self.add_file_handler(
                log_directory,
                log_file_name=log_file_name,
                log_file_extension=log_file_extension,
            )

        self.console_handler = None
        if log_to_console:
            self.console_handler = self._prepare_handler(
                logging.StreamHandler(), self.log_level, log_format, date_format
            )
            self._add_handler_to_logger(self.logger, self.console_handler, verbose=self.verbose)

        self.logger.propagate = False
        _REGISTRY[logger_name] = self

    def add_file_handler(self, log_directory: str, log_file_name: Optional[str] = None,
                         log_file_extension: str = ".log") -> Optional[logging.Handler]:
        """Attaches a file handler writing to ``<log_directory>/<name><extension>``."""
        if not log_file_extension.startswith("."):
            log_file_extension = "." + log_file_extension
        try:
            log_dir_path = _checkDirectory(log_directory, verbose=self.verbose)
        except DirectoryCreationError as e:
            _print(f"Error setting up file handler for logger '{self.logger_name}': {e}", verbose=True)
            return None
        file_name = (log_file_name or self.logger_name).replace(".", "_")
        path = os.path.join(log_dir_path, f"{file_name}{log_file_extension}")
        self.file_handler = self._prepare_handler(
            logging.FileHandler(filename=path, mode="a"),
            self.logger.level, self.log_format, self.date_format,
        )
        self._add_handler_to_logger(self.logger, self.file_handler, verbose=self.verbose)
        return self.file_handler

    def set_level(self, level: int) -> None:
        self.logger.setLevel(level)
        for handler in self.logger.handlers:
            handler.setLevel(level)

    # Standard logging methods
    def debug(self, message: str, *args, **kwargs): self.logger.debug(message, *args, **kwargs)
    def info(self, message: str, *args, **kwargs): self.logger.info(message, *args, **kwargs)
    def warning(self, message: str, *args, **kwargs): self.logger.warning(message, *args, **kwargs)
    def exception(self, message: str, *args, **kwargs): self.logger.exception(message, *args, **kwargs)

    def isEnabledFor(self, level: int) -> bool:
        return self.logger.isEnabledFor(level)


class BasicLogger(AppLogger):
    """A convenience wrapper for AppLogger with the package defaults: console only, quiet setup."""

    def __init__(self,
                 logger_name: str = "blockmix",
                 log_level: Optional[int] = None,
                 log_directory: Optional[str] = None,
                 log_file_name: Optional[str] = None,
                 verbose: bool = False,
                 **kwargs):
        super().__init__(
            logger_name=logger_name,
            log_level=log_level,
            log_directory=log_directory,
            log_file_name=log_file_name,
            verbose=verbose,
            **kwargs
        )


def configure_package_logging(level: Optional[int] = None, log_directory: Optional[str] = None) -> None:
    """Applies a level (and optionally a shared log directory) to every blockmix logger."""
    for name, app_logger in list(_REGISTRY.items()):
        if not name.startswith("blockmix"):
            continue
        if level is not None:
            app_logger.set_level(level)
        if log_directory:
            app_logger.add_file_handler(log_directory, log_file_name="blockmix")
