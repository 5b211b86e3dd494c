import numpy as np

from gazemarkers.ingest import GazeTrace


def make_trace(t_ms, x_px, y_px, pupil=None, valid=None):
    n = len(t_ms)
    if pupil is None:
        pupil = np.full(n, 3.5)
    if valid is None:
        valid = np.ones(n, dtype=bool)
    return GazeTrace(
        t_ms=np.asarray(t_ms, dtype=np.float64),
        x_px=np.asarray(x_px, dtype=np.float64),
        y_px=np.asarray(y_px, dtype=np.float64),
        pupil=np.asarray(pupil, dtype=np.float64),
        valid=np.asarray(valid, dtype=bool),
    )
