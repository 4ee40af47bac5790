import os
import time
from contextlib import contextmanager
from hashlib import sha256


def write_file(filename: str, data: str):
    """
    write data to file
    """
    dir = os.path.dirname(filename)
    if dir and not os.path.exists(dir):
        os.makedirs(dir)
    with open(filename, "w", encoding="utf-8") as file:
        file.write(data)


def read_file(filename: str) -> str:
    with open(filename, "r", encoding="utf-8") as file:
        return file.read()


def text_hash(text: str) -> str:
    return sha256(text.encode()).hexdigest()


class Stopwatch:
    """
    Wall clock accumulator; time spent inside `paused()` is not counted.
    """

    def __init__(self) -> None:
        self._elapsed = 0.0
        self._started: float | None = None

    def start(self) -> "Stopwatch":
        if self._started is None:
            self._started = time.perf_counter()
        return self

    def stop(self) -> float:
        if self._started is not None:
            self._elapsed += time.perf_counter() - self._started
            self._started = None
        return self._elapsed

    @contextmanager
    def paused(self):
        running = self._started is not None
        self.stop()
        try:
            yield
        finally:
            if running:
                self.start()

