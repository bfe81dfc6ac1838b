"""Colored console logging, rotating log files, stage progress and timing records for lab runs."""

import copy
import logging
import logging.handlers
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

try:
    import colorama
    from colorama import Back, Fore, Style

    colorama.init(autoreset=True)
    COLORS_AVAILABLE = True
except ImportError:
    COLORS_AVAILABLE = False

    class _NoColor:
        def __getattr__(self, name):
            return ""

    Fore = Style = Back = _NoColor()

CONSOLE_FORMAT = "%(asctime)s | %(name)-20s | %(levelname)-8s | %(message)s"
DETAILED_FORMAT = "%(asctime)s | %(name)-24s | %(levelname)-8s | %(funcName)s:%(lineno)d | %(message)s"
ROOT_NAME = "lab"


def _paint(text: str, *codes: str) -> str:
    if not COLORS_AVAILABLE:
        return text
    return "".join(codes) + text + Style.RESET_ALL


class LabFormatter(logging.Formatter):
    """Pipe-separated records; the console variant colors name, level and message per level."""

    LEVEL_STYLES = {
        logging.DEBUG: (Fore.CYAN,),
        logging.INFO: (Fore.GREEN,),
        logging.WARNING: (Fore.YELLOW,),
        logging.ERROR: (Fore.RED,),
        logging.CRITICAL: (Fore.RED, Style.BRIGHT, Back.WHITE),
    }

    def __init__(self, colored: bool = False, detailed: bool = False):
        super().__init__(DETAILED_FORMAT if detailed else CONSOLE_FORMAT, datefmt="%H:%M:%S")
        self.colored = colored and COLORS_AVAILABLE

    def formatTime(self, record: logging.LogRecord, datefmt: Optional[str] = None) -> str:
        stamp = super().formatTime(record, datefmt)
        return _paint(stamp, Fore.BLUE, Style.DIM) if self.colored else stamp

    def format(self, record: logging.LogRecord) -> str:
        if not self.colored:
            return super().format(record)

        # the record is shared between handlers, so color a copy
        styled = copy.copy(record)
        level_style = self.LEVEL_STYLES.get(record.levelno, ())
        styled.name = _paint(f"{record.name:<20}", Fore.MAGENTA)
        styled.levelname = _paint(f"{record.levelname:<8}", Style.BRIGHT, *level_style)
        styled.msg = _paint(str(record.msg), *level_style)
        return super().format(styled)


class StageLogger:
    """Numbered progress lines for the stages of one run, with outcome counts."""

    RULE = "=" * 60

    def __init__(self, logger: logging.Logger):
        self.logger = logger
        self.total_steps = 0
        self.steps_completed = 0
        self.failures = 0
        self._started = time.perf_counter()

    def start_sequence(self, total_steps: int, title: str = "Experiment run") -> None:
        self.total_steps = total_steps
        self.steps_completed = 0
        self.failures = 0
        self._started = time.perf_counter()
        for line in (self.RULE, title.upper().center(60), self.RULE):
            self.logger.info(_paint(line, Fore.CYAN, Style.BRIGHT))

    def step(self, message: str, success: bool = True) -> None:
        """Count one stage and log it at INFO, or at ERROR when it did not succeed."""
        self.steps_completed += 1
        counter = f"[{self.steps_completed}/{self.total_steps}]"
        if success:
            self.logger.info(f"{_paint('ok', Fore.GREEN)} {_paint(counter, Fore.BLUE, Style.DIM)} {message}")
        else:
            self.failures += 1
            self.logger.error(f"{_paint('FAIL', Fore.RED, Style.BRIGHT)} {counter} {message}")

    def elapsed(self) -> float:
        return time.perf_counter() - self._started

    def complete(self, message: str = "Run finished") -> None:
        summary = f"{message} in {self.elapsed():.2f}s"
        if self.failures:
            summary += f" ({self.failures} of {self.steps_completed} steps failed)"
        self.logger.info(_paint(summary, Fore.GREEN if not self.failures else Fore.YELLOW, Style.BRIGHT))


class LabLogger:
    """Owns the `lab` logger tree, its handlers and the timing records of the current run."""

    def __init__(self, name: str = ROOT_NAME):
        self.name = name
        self.logger = logging.getLogger(name)
        self.stage_logger: Optional[StageLogger] = None
        self.timings: List[Dict[str, object]] = []

    @staticmethod
    def _rotating(path: Path, level: int, max_bytes: int, backups: int, detailed: bool) -> logging.Handler:
        handler = logging.handlers.RotatingFileHandler(
            path, maxBytes=max_bytes, backupCount=backups, encoding="utf-8"
        )
        handler.setLevel(level)
        handler.setFormatter(LabFormatter(colored=False, detailed=detailed))
        return handler

    def setup_logging(
        self,
        level: int = logging.INFO,
        colors: bool = True,
        log_file: Optional[str] = "logs/lab.log",
        detailed_files: bool = True,
        max_bytes: int = 10 * 1024 * 1024,
        backups: int = 5,
    ) -> StageLogger:
        """Replace the handlers: console on stderr, plus full and error-only rotating files when `log_file` is set."""
        for handler in list(self.logger.handlers):
            self.logger.removeHandler(handler)
            handler.close()
        self.logger.setLevel(min(level, logging.DEBUG) if log_file else level)

        # stdout is reserved for the CLI summary line
        console = logging.StreamHandler(sys.stderr)
        console.setLevel(level)
        console.setFormatter(LabFormatter(colored=colors))
        self.logger.addHandler(console)

        if log_file:
            path = Path(log_file)
            path.parent.mkdir(parents=True, exist_ok=True)
            self.logger.addHandler(self._rotating(path, logging.DEBUG, max_bytes, backups, detailed_files))
            errors = path.with_name(f"error_{path.name}")
            self.logger.addHandler(self._rotating(errors, logging.ERROR, max_bytes // 2, backups, True))

        self.stage_logger = StageLogger(self.logger)
        return self.stage_logger

    def get_logger(self, name: Optional[str] = None) -> logging.Logger:
        return logging.getLogger(f"{self.name}.{name}") if name else self.logger

    def get_stage_logger(self) -> StageLogger:
        if self.stage_logger is None:
            raise RuntimeError("logging is not configured; call setup_logging() first")
        return self.stage_logger


lab_logger = LabLogger()


def get_logger(name: str) -> logging.Logger:
    return lab_logger.get_logger(name)


def log_performance(operation: str, duration: float, **metadata) -> None:
    """Log the timing of a numerical operation and keep it for the run manifest."""
    details = " ".join(f"{key}={value}" for key, value in metadata.items())
    get_logger("performance").info(f"{operation}: {duration:.3f}s {details}".rstrip())
    lab_logger.timings.append({"operation": operation, "seconds": duration, **metadata})


def drain_timings() -> List[Dict[str, object]]:
    """Timings recorded since the last call."""
    timings, lab_logger.timings = lab_logger.timings, []
    return timings


# preset name -> (level, console colors, write log files, detailed file records)
LOGGING_PRESETS: Dict[str, Tuple[int, bool, bool, bool]] = {
    "development": (logging.DEBUG, True, True, True),
    "production": (logging.INFO, False, True, True),
    "minimal": (logging.WARNING, True, False, False),
}


def setup_logging_preset(preset: str = "development", log_file: Optional[str] = None) -> StageLogger:
    """Configure logging from one of LOGGING_PRESETS; `log_file` overrides the default path."""
    if preset not in LOGGING_PRESETS:
        raise ValueError(f"unknown logging preset {preset!r}, expected one of {sorted(LOGGING_PRESETS)}")

    level, colors, files, detailed = LOGGING_PRESETS[preset]
    return lab_logger.setup_logging(
        level=level,
        colors=colors,
        log_file=(log_file or "logs/lab.log") if files else None,
        detailed_files=detailed,
    )
