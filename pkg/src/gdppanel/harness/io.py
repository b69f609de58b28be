"""Reading and writing panel and vector CSV files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError
from ..regression import PanelDataset, UserBlock

__all__ = [
    "load_panel_csv",
    "write_panel_csv",
    "load_vectors_csv",
    "save_vectors_csv",
    "within_demean",
    "CampLikeModel",
    "camp_like_panel",
]


def _float(tok: str, line: int, col: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"column {col!r}: {tok!r} is not a number", line) from None
    if not math.isfinite(v):
        raise ParseError(f"column {col!r}: non-finite value {tok!r}", line)
    return v


def _rows(path):
    """Yield ``(line_number, fields)`` skipping blank lines."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for fields in reader:
            if not fields or all(not f.strip() for f in fields):
                continue
            yield reader.line_num, [f.strip() for f in fields]


def load_panel_csv(path) -> PanelDataset:
    """Load a panel from ``user_id,t,y,x1,...,xd[,z]``.

    Rows may appear in any order. Users are sorted by ``user_id`` (numerically
    when every id is numeric) and rows within a user by ``t``. Panels may be unbalanced.

    Raises
    ------
    ParseError
        On a bad header, ragged row, non-numeric field, repeated ``(user, t)``
        or a ``z`` value that changes within a user. The message names the
        offending line.
    """
    it = _rows(path)
    try:
        line, header = next(it)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    cols = [h.lower() for h in header]
    has_z = cols[-1] == "z"
    xcols = cols[3:-1] if has_z else cols[3:]
    if cols[:3] != ["user_id", "t", "y"] or not xcols:
        raise ParseError("header must be user_id,t,y,x1,...,xd[,z]", line)
    for k, c in enumerate(xcols, start=1):
        if c != f"x{k}":
            raise ParseError(f"expected column 'x{k}', found {c!r}", line)
    width = len(cols)
    d = len(xcols)

    order: list[str] = []
    rows: dict[str, list[tuple[float, float, list[float], int]]] = {}
    zs: dict[str, tuple[int, int]] = {}
    for line, f in it:
        if len(f) != width:
            raise ParseError(f"expected {width} fields, found {len(f)}", line)
        uid = f[0]
        if not uid:
            raise ParseError("empty user_id", line)
        t = _float(f[1], line, "t")
        y = _float(f[2], line, "y")
        x = [_float(v, line, xcols[k]) for k, v in enumerate(f[3:3 + d])]
        if has_z:
            zv = _float(f[-1], line, "z")
            if zv not in (0.0, 1.0):
                raise ParseError(f"z must be 0 or 1, found {f[-1]!r}", line)
            zv = int(zv)
            if uid in zs and zs[uid][0] != zv:
                raise ParseError(
                    f"user {uid!r} changes z from {zs[uid][0]} (line {zs[uid][1]}) to {zv}", line
                )
            zs.setdefault(uid, (zv, line))
        if uid not in rows:
            rows[uid] = []
            order.append(uid)
        rows[uid].append((t, y, x, line))

    if len(order) < 2:
        raise ParseError(f"need at least two users, found {len(order)}", line)
    try:
        order.sort(key=float)
    except ValueError:
        order.sort()
    blocks = []
    for uid in order:
        r = sorted(rows[uid], key=lambda row: row[0])
        for a, b in zip(r, r[1:]):
            if a[0] == b[0]:
                raise ParseError(f"user {uid!r} repeats t={b[0]:g} (also on line {a[3]})", b[3])
        X = np.array([row[2] for row in r], dtype=float)
        Y = np.array([row[1] for row in r], dtype=float)
        blocks.append(UserBlock(uid, X, Y, zs[uid][0] if has_z else None))
    return PanelDataset(tuple(blocks), d)


def write_panel_csv(panel: PanelDataset, path, t_values=None) -> None:
    """Write ``panel`` in the format read by :func:`load_panel_csv`.

    ``t_values`` optionally gives per-user time stamps; by default ``t`` is
    ``1..T_i``.
    """
    has_z = panel.has_groups
    header = ["user_id", "t", "y"] + [f"x{k + 1}" for k in range(panel.d)] + (["z"] if has_z else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, u in enumerate(panel.users):
            ts = range(1, u.T + 1) if t_values is None else t_values[i]
            for t, y, x in zip(ts, u.Y, u.X):
                row = [u.user_id, repr(float(t)) if t_values is not None else t, repr(float(y))]
                row += [repr(float(v)) for v in x]
                if has_z:
                    row.append(u.z)
                w.writerow(row)


def load_vectors_csv(path) -> np.ndarray:
    """Load one vector per row. A first row that is not numeric is a header."""
    out: list[list[float]] = []
    width = None
    first = True
    for line, f in _rows(path):
        if first:
            first = False
            try:
                [float(v) for v in f]
            except ValueError:
                continue
        if width is None:
            width = len(f)
        elif len(f) != width:
            raise ParseError(f"expected {width} fields, found {len(f)}", line)
        out.append([_float(v, line, f"c{k + 1}") for k, v in enumerate(f)])
    if not out:
        raise ParseError("no data rows", 1)
    return np.array(out, dtype=float)


def within_demean(panel: PanelDataset) -> PanelDataset:
    """Subtract each user's own means from ``X`` and ``Y`` (fixed-effects transform)."""
    users = tuple(
        UserBlock(u.user_id, u.X - u.X.mean(axis=0), u.Y - u.Y.mean(), u.z) for u in panel.users
    )
    return PanelDataset(users, panel.d)


@dataclass(frozen=True)
class CampLikeModel:
    """Synthetic lung-function panel with the shape of a pediatric cohort.

    ``FEV_it = a + a_i + (slope + s_i + z_i effect) * days_it + e_it``. Each
    child has a baseline visit plus ``Unif{2..max_followups}`` follow-ups
    spread over ``[0, horizon_days]``, except ``sparse_users`` children with
    at most one follow-up.
    """

    n: int = 695
    slope: float = 6.4e-4
    effect: float = 0.0
    slope_sd: float = 2.0e-4
    intercept: float = 2.0
    intercept_sd: float = 0.5
    noise_sd: float = 0.15
    max_followups: int = 17
    horizon_days: float = 1800.0
    treated_fraction: float = 0.6
    sparse_users: int = 8


def camp_like_panel(model: CampLikeModel, rng) -> tuple[PanelDataset, list[np.ndarray]]:
    """Draw a CAMP-style panel; the single covariate is ``days``.

    Returns the panel (``z`` = extra medication) and the per-user visit days.
    """
    blocks, days_all = [], []
    n1 = int(round(model.treated_fraction * model.n))
    z = np.zeros(model.n, dtype=int)
    z[rng.permutation(model.n)[:n1]] = 1
    sparse = np.zeros(model.n, dtype=bool)
    sparse[rng.permutation(model.n)[: model.sparse_users]] = True
    for i in range(model.n):
        lo, hi = (0, 1) if sparse[i] else (2, model.max_followups)
        k = 1 + int(rng.integers(lo, hi + 1))
        days = np.sort(np.r_[0.0, rng.uniform(0.0, model.horizon_days, k - 1)])
        b = model.slope + model.slope_sd * rng.standard_normal() + z[i] * model.effect
        a = model.intercept + model.intercept_sd * rng.standard_normal()
        fev = a + b * days + model.noise_sd * rng.standard_normal(k)
        blocks.append(UserBlock(f"c{i:04d}", days[:, None], fev, int(z[i])))
        days_all.append(days)
    return PanelDataset(tuple(blocks), 1), days_all


def save_vectors_csv(data, path: str | Path) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"c{k + 1}" for k in range(data.shape[1])])
        for row in data:
            w.writerow([repr(float(v)) for v in row])
