import logging
import logging.handlers
from queue import Queue

from rich.logging import RichHandler

log = logging.getLogger("levitrap")


def init_logger(
    disable_rich: bool = False, debug: bool = False, log_file: str = "levitrap.log"
) -> logging.handlers.QueueListener:
    formatter = logging.Formatter(
        "[{asctime}] {levelname} {name}: {message}", datefmt="%Y-%m-%d %H:%M:%S", style="{"
    )

    # handlers
    stream_handler: logging.Handler
    if disable_rich:
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(formatter)
    else:
        stream_handler = RichHandler(rich_tracebacks=True, show_path=False)
        stream_handler.setFormatter(logging.Formatter("{name}: {message}", style="{"))
    stream_handler.setLevel(logging.DEBUG if debug else logging.INFO)

    # file handler
    file_handler = logging.handlers.RotatingFileHandler(
        log_file, maxBytes=8**7, backupCount=8, encoding="utf-8"
    )
    file_handler.setLevel(logging.INFO)
    file_handler.setFormatter(formatter)

    queue = Queue(-1)
    queue_handler = logging.handlers.QueueHandler(queue)

    root = logging.getLogger()
    root.addHandler(queue_handler)
    root.setLevel(logging.INFO)
    log.setLevel(logging.DEBUG if debug else logging.INFO)

    queue_listener = logging.handlers.QueueListener(
        queue, stream_handler, file_handler, respect_handler_level=True
    )
    queue_listener.start()

    return queue_listener
