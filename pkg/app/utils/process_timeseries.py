from pathlib import Path

import numpy as np
import orjson
import pandas as pd

from app.errors import OutputError

CSV_COLUMNS = (
    ["t", "p0", "v0", "a0", "p1", "v1", "a1", "u0", "u1", "du_attack"]
    + [f"ey_{i}" for i in range(1, 5)]
    + [f"e2up_{i}" for i in range(1, 5)]
    + [f"e2lo_{i}" for i in range(1, 5)]
    + [f"nufil_{i}" for i in range(1, 5)]
    + ["alarm_novel", "alarm_eoi", "du_hat"]
)


def run_frame(result, every: int = 1) -> pd.DataFrame:
    """One row per integration step (or every `every`-th step), columns as in CSV_COLUMNS."""
    sl = slice(None, None, max(int(every), 1))
    blocks = [
        result.times[sl, None],
        result.states[sl],
        result.inputs[sl],
        result.du_attack[sl, None],
        result.e_y[sl],
        result.e2_upper[sl],
        result.e2_lower[sl],
        result.nu_fil[sl],
    ]
    df = pd.DataFrame(np.hstack(blocks), columns=CSV_COLUMNS[:-3])
    df["alarm_novel"] = result.alarm_novel[sl]
    df["alarm_eoi"] = result.alarm_eoi[sl]
    df["du_hat"] = result.du_hat[sl]
    return df


def write_csv(df: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False)
    except OSError as exc:
        raise OutputError(f"Cannot write {path}", str(exc)) from exc
    return path


def read_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path)


def write_json(data, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))
    except OSError as exc:
        raise OutputError(f"Cannot write {path}", str(exc)) from exc
    return path
