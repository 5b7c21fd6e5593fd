import logging
import threading

from cachetools import LRUCache

_seen: LRUCache[tuple[str, str], bool] = LRUCache(maxsize=1024)
_lock = threading.Lock()


def warn_once(logger: logging.Logger, message: str):
    """
    Log a warning the first time a given message is emitted by ``logger``.

    Sweeps evaluate the same validity checks thousands of times, this keeps the log readable.
    Only the most recent messages are remembered.
    """
    key = (logger.name, message)
    with _lock:
        if key in _seen:
            return
        _seen[key] = True
    logger.warning(message)


def reset_warnings():
    with _lock:
        _seen.clear()
