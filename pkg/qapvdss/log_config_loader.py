from collections.abc import Mapping
import logging
from pathlib import Path
import sys
import time
from typing import Any, TextIO

import numpy as np
import orjson

_CONFIG_PATH = Path(__file__).parent.parent / 'log_config.json'
_MAIN_PROCESS = 'MainProcess'


def _load_default_log_config() -> dict[str, Any]:
    try:
        data = orjson.loads(_CONFIG_PATH.read_bytes())
    except FileNotFoundError as e:
        raise RuntimeError(f'Log config file not found: {_CONFIG_PATH}') from e
    except orjson.JSONDecodeError as e:
        raise RuntimeError(f'Invalid JSON in log config file {_CONFIG_PATH}: {e}') from e
    if not isinstance(data, dict):
        raise RuntimeError(f'Expected JSON object in {_CONFIG_PATH}, got {type(data).__name__}')
    return {
        'datefmt': data.get('datefmt'),
        'standard_fields': frozenset(data.get('standard_fields', [])),
        'quiet_loggers': list(data.get('quiet_loggers', [])),
    }


DEFAULT_LOG_CONFIG: dict[str, Any] = _load_default_log_config()


def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class StructuredFormatter(logging.Formatter):
    """Base record layout: timestamp, level, service, logger, message and ``extra`` fields.

    Records emitted inside campaign worker processes also carry the worker name.
    """

    def __init__(self, service_name: str, version: str, datefmt: str | None = None):
        super().__init__(datefmt=datefmt or DEFAULT_LOG_CONFIG['datefmt'])
        self.service_name = service_name
        self.version = version
        self.standard_fields: frozenset[str] = DEFAULT_LOG_CONFIG['standard_fields']

    def formatTime(self, record: logging.LogRecord, datefmt: str | None = None) -> str:
        ct = self.converter(record.created)
        if datefmt:
            return time.strftime(datefmt, ct)
        return f'{time.strftime("%d.%m.%Y %H:%M:%S", ct)}.{int(record.msecs):03d}'

    def extra_fields(self, record: logging.LogRecord) -> dict[str, Any]:
        fields = {
            key: value
            for key, value in record.__dict__.items()
            if key not in self.standard_fields and not key.startswith('_')
        }
        if record.processName and record.processName != _MAIN_PROCESS:
            fields.setdefault('worker', record.processName)
        return fields

    def entry(self, record: logging.LogRecord) -> dict[str, Any]:
        entry = {
            'timestamp': self.formatTime(record, self.datefmt),
            'level': record.levelname,
            'service': self.service_name,
            'version': self.version,
            'logger': record.name,
            'message': record.getMessage(),
        }
        entry.update(self.extra_fields(record))
        if record.exc_info:
            entry['exception'] = self.formatException(record.exc_info)
        return entry


class JsonFormatter(StructuredFormatter):
    def format(self, record: logging.LogRecord) -> str:
        return orjson.dumps(self.entry(record), default=_plain).decode('utf-8')


class TextFormatter(StructuredFormatter):
    def format(self, record: logging.LogRecord) -> str:
        extras = ' '.join(f'[{k}={_text(v)}]' for k, v in self.extra_fields(record).items())
        line = f'{self.formatTime(record, self.datefmt)} [{record.levelname:<8}] {record.name}: '
        line += f'{record.getMessage()} {extras}'.strip()
        if record.exc_info:
            line += f'\n{self.formatException(record.exc_info)}'
        return line


def _text(value: Any) -> str:
    if isinstance(value, float | np.floating):
        return f'{float(value):.6g}'
    if isinstance(value, Mapping):
        return ','.join(f'{k}:{_text(v)}' for k, v in value.items())
    return str(value)


_FORMATTERS: dict[str, type[StructuredFormatter]] = {'json': JsonFormatter, 'text': TextFormatter}


def setup_logging(
    service_name: str,
    level: str,
    log_format: str,
    version: str,
    stream: TextIO | None = None,
) -> None:
    """Route all records to one handler.

    Logs default to stderr so that command results written to stdout stay
    machine readable.
    """
    log_level = getattr(logging, level.upper(), logging.INFO)
    formatter_cls = _FORMATTERS.get(log_format.lower(), TextFormatter)

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(formatter_cls(service_name=service_name, version=version))
    handler.setLevel(log_level)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    root_logger.handlers.clear()
    root_logger.addHandler(handler)

    for logger_name in DEFAULT_LOG_CONFIG['quiet_loggers']:
        logging.getLogger(logger_name).setLevel(logging.WARNING)
