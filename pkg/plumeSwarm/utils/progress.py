"""Terminal progress: a status-line spinner for single trials and a tqdm bar for sweeps."""

import sys
import threading
from enum import Enum
from typing import Callable, List, Optional, Union

from tqdm import tqdm


class SpinnerStyle(Enum):
    """Spinner animation frames"""
    DOTS = ['⣾', '⣽', '⣻', '⢿', '⡿', '⣟', '⣯', '⣷']
    BRAILLE = ['⠋', '⠙', '⠹', '⠸', '⠼', '⠴', '⠦', '⠧', '⠇', '⠏']
    LINE = ['|', '/', '-', '\\']


class Spinner:
    """
    Status line for a long-running trial.

    A daemon thread redraws one terminal line every `delay` seconds,
    appending whatever `status` returns, so the simulation loop only has
    to publish its tick.

    Example:
        ```python
        tracker = TickTracker()
        with Spinner("Running trial", status=tracker.__str__):
            run_trial(config, seed, progress=tracker.update)
        ```
    """

    def __init__(
        self,
        text: str = "Running...",
        status: Optional[Callable[[], str]] = None,
        style: Union[SpinnerStyle, List[str]] = SpinnerStyle.DOTS,
        delay: float = 0.1,
        done_text: str = "Done!",
        enabled: bool = True,
        stream=sys.stdout
    ):
        """
        Args:
            text: Label shown after the frame
            status: Callback polled on every redraw, shown in brackets
            style: SpinnerStyle or an explicit list of frames
            delay: Seconds between redraws
            done_text: Final line written on a clean exit
            enabled: When False the spinner never draws
            stream: Where to draw
        """
        self.text = text
        self.status = status
        self.frames = style.value if isinstance(style, SpinnerStyle) else style
        self.delay = delay
        self.done_text = done_text
        self.enabled = enabled
        self.stream = stream

        self._thread: Optional[threading.Thread] = None
        self._halt = threading.Event()
        self._lock = threading.Lock()
        self._index = 0
        self._width = 0

    def _line(self) -> str:
        frame = self.frames[self._index % len(self.frames)]
        self._index += 1
        line = f"{frame} {self.text}"
        if self.status is not None:
            line += f" [{self.status()}]"
        return line

    def _draw(self, text: str) -> None:
        # pad over the previous line, which may have been longer
        self.stream.write("\r" + text.ljust(self._width))
        self.stream.flush()
        self._width = len(text)

    def render(self) -> str:
        """Draw the next frame and return its text."""
        with self._lock:
            line = self._line()
            self._draw(line)
            return line

    def _run(self) -> None:
        while not self._halt.is_set():
            self.render()
            self._halt.wait(self.delay)

    def start(self) -> "Spinner":
        if self.enabled and self._thread is None:
            self._halt.clear()
            self._thread = threading.Thread(target=self._run, name="spinner", daemon=True)
            self._thread.start()
        return self

    def stop(self, show_done: bool = True) -> None:
        if self._thread is None:
            return
        self._halt.set()
        self._thread.join()
        self._thread = None
        with self._lock:
            self._draw(self.done_text if show_done else "")
            self.stream.write("\n" if show_done else "\r")
            self.stream.flush()

    def update_text(self, text: str) -> None:
        with self._lock:
            self.text = text

    def __enter__(self):
        return self.start()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop(show_done=exc_type is None)


class TickTracker:
    """Latest tick published by a running trial."""

    def __init__(self):
        self.tick = 0

    def update(self, tick: int) -> None:
        self.tick = tick

    def __str__(self) -> str:
        return f"tick {self.tick:,}"


class SweepProgress:
    """tqdm bar over the trials of an experiment sweep, with a success tally."""

    def __init__(self, total: int, desc: str = "Trials", enabled: bool = True, ascii: bool = False):
        self.successes = 0
        self.done = 0
        self._bar = tqdm(total=total, desc=desc, unit="trial", disable=not enabled, ascii=ascii,
                         leave=True, dynamic_ncols=True)

    def update(self, success: bool) -> None:
        self.done += 1
        self.successes += int(bool(success))
        self._bar.set_postfix_str(f"success {self.successes}/{self.done}", refresh=False)
        self._bar.update(1)

    def close(self) -> None:
        self._bar.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()
