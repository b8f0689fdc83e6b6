"""Exception types raised across the package."""


class AlertThrottleError(Exception):
    """Base class for every error raised by alertthrottle."""


class AlertParseError(AlertThrottleError, ValueError):
    def __init__(self, message, key=None, lineno=None):
        self.key = key
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(f"{where}{message}")


class ConfigError(AlertThrottleError, ValueError):
    pass


class ClockRegressionError(AlertThrottleError, ValueError):
    """An alert arrived with an event time earlier than a bucket's last refill."""


class RunOrderError(AlertThrottleError, ValueError):
    """Timestamp went backwards inside a run."""


class CorruptRunError(AlertThrottleError, ValueError):
    pass


class RecordTooLargeError(AlertThrottleError, ValueError):
    pass


class LogFormatError(AlertThrottleError):
    """The log file is not a valid alert log. ``offset`` locates the bad frame."""

    def __init__(self, message, offset=None):
        self.offset = offset
        where = f" at byte offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class LogWriteError(AlertThrottleError, OSError):
    def __init__(self, message, bytes_written):
        self.bytes_written = bytes_written
        super().__init__(f"{message} ({bytes_written} bytes written)")


class PipelineError(AlertThrottleError):
    """Wraps a failure mid-stream; ``stats`` holds the counters up to that point."""

    def __init__(self, message, stats):
        self.stats = stats
        super().__init__(message)
