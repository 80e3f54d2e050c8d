import sys
import pytest
import io
import time
from unittest.mock import patch

# Add the parent directory to sys.path
sys.path.insert(0, ".")

from plumeSwarm.utils.progress import Spinner, SpinnerStyle, SweepProgress, TickTracker


def test_spinner_init():
    """Test spinner initialization with default values."""
    spinner = Spinner()
    assert spinner.text == "Running..."
    assert spinner.frames == SpinnerStyle.DOTS.value
    assert spinner.delay == 0.1
    assert spinner.done_text == "Done!"
    assert spinner.status is None
    assert spinner._thread is None
    assert spinner._index == 0


def test_spinner_custom_style():
    """Test spinner with custom style."""
    spinner = Spinner(style=SpinnerStyle.LINE)
    assert spinner.frames == SpinnerStyle.LINE.value

    custom_frames = ["A", "B", "C"]
    spinner = Spinner(style=custom_frames)
    assert spinner.frames == custom_frames


def test_spinner_update_text():
    """Test spinner text update."""
    spinner = Spinner()
    spinner.update_text("New text")
    assert spinner.text == "New text"


def test_spinner_render_with_status():
    """A single frame shows the text and the polled status."""
    tracker = TickTracker()
    tracker.update(1234)
    fake_output = io.StringIO()
    spinner = Spinner("Simulating", status=tracker.__str__, style=["A", "B"], stream=fake_output)

    assert spinner.render() == "A Simulating [tick 1,234]"
    assert spinner.render() == "B Simulating [tick 1,234]"
    assert "Simulating" in fake_output.getvalue()


def test_disabled_spinner_draws_nothing():
    """A disabled spinner starts no thread and writes nothing."""
    fake_output = io.StringIO()
    with Spinner("Quiet", enabled=False, stream=fake_output) as spinner:
        assert spinner._thread is None
    assert fake_output.getvalue() == ""


def test_tick_tracker():
    """The tracker keeps the latest tick."""
    tracker = TickTracker()
    assert str(tracker) == "tick 0"
    tracker.update(5)
    tracker.update(7)
    assert tracker.tick == 7


def test_sweep_progress_tally():
    """The sweep bar counts finished and successful trials."""
    with patch('plumeSwarm.utils.progress.tqdm') as bar:
        with SweepProgress(3, enabled=False) as progress:
            progress.update(True)
            progress.update(False)
            progress.update(True)
        assert progress.done == 3
        assert progress.successes == 2
        bar.return_value.close.assert_called_once()
        bar.return_value.set_postfix_str.assert_called_with("success 2/3", refresh=False)


@pytest.mark.skip(reason="This test involves actual rendering which may not work in CI")
def test_spinner_context_manager():
    """Test that spinner works as a context manager."""
    fake_output = io.StringIO()

    with Spinner("Context test", stream=fake_output):
        time.sleep(0.2)

    output = fake_output.getvalue()
    assert "Context test" in output
    assert "Done!" in output
