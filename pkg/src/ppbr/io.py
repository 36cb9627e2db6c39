"""On-disk formats: dataset CSVs, JSON manifests and chain directories.

Dataset CSV: header ``y, m_1_1, m_1_2, ..., m_p_p`` (packed upper triangle,
row-major), one subject per row.

Chain directory: ``meta.json``, ``draws.csv`` (one row per stored draw) and
``loglik.bin`` (little-endian float64, row-major ``n x n_draws``).
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np

from .data_model import (
    Chain,
    ComponentState,
    Dataset,
    Direction,
    FitConfig,
    ModelState,
    RidgeFunction,
    SSLHyper,
    UniformPrior,
    dim_from_packed,
)
from .exceptions import PPBRError


def atomic_write(path: Path, data: bytes | str) -> None:
    """Write via a temporary sibling file and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj: Any) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: Path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def dataset_header(p: int) -> list[str]:
    return ["y"] + [f"m_{j}_{k}" for j in range(1, p + 1) for k in range(j, p + 1)]


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer, bool, np.bool_)):
        return str(int(v))
    return repr(float(v))


def _csv_text(header: list[str], rows) -> str:
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_dataset(path: Path, dataset: Dataset, manifest: dict | None = None) -> None:
    """Write the dataset CSV; a sidecar ``<name>.json`` is added when ``manifest`` is given."""
    rows = np.column_stack([dataset.responses, dataset.packed])
    atomic_write(Path(path), _csv_text(dataset_header(dataset.p), rows))
    if manifest is not None:
        meta = {"p": dataset.p, "n": dataset.n, **manifest}
        write_json(Path(path).with_suffix(".json"), meta)


def read_dataset(path: Path) -> Dataset:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [row for row in reader if row]
    except (OSError, StopIteration) as exc:
        raise PPBRError(f"cannot read dataset {path}: {exc}") from exc
    p = dim_from_packed(len(header) - 1)
    expected = dataset_header(p)
    if header != expected:
        bad = next(i for i, (a, b) in enumerate(zip(header, expected)) if a != b)
        raise PPBRError(f"{path}: column {bad + 1} is {header[bad]!r}, expected {expected[bad]!r}")
    for line, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise PPBRError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
    try:
        arr = np.array(rows, dtype=float)
    except ValueError as exc:
        for line, row in enumerate(rows, start=2):
            for col, value in enumerate(row):
                try:
                    float(value)
                except ValueError:
                    raise PPBRError(f"{path}:{line}: non-numeric value {value!r} in column {header[col]}") from exc
        raise PPBRError(f"{path}: {exc}") from exc
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise PPBRError(f"{path}: no data rows")
    return Dataset(arr[:, 1:], arr[:, 0], p)


# ---------------------------------------------------------------- config


def config_to_dict(config: FitConfig) -> dict:
    d = asdict(config)
    if isinstance(config.prior, SSLHyper):
        d["prior"] = {"kind": "spike_slab", **asdict(config.prior)}
    else:
        d["prior"] = {"kind": "uniform"}
    d["mu_prior"] = list(config.mu_prior)
    d["sigma2_prior"] = list(config.sigma2_prior)
    return d


def config_from_dict(d: dict) -> FitConfig:
    d = dict(d)
    prior = dict(d.pop("prior", {"kind": "spike_slab"}))
    kind = prior.pop("kind", "spike_slab")
    d["prior"] = UniformPrior() if kind == "uniform" else SSLHyper(**prior)
    for key in ("mu_prior", "sigma2_prior"):
        if key in d:
            d[key] = tuple(d[key])
    return FitConfig(**d)


# ---------------------------------------------------------------- chains


def draws_header(K: int, p: int, J: int) -> list[str]:
    cols = ["mu", "sigma2"]
    for k in range(1, K + 1):
        pre = f"k{k}_"
        cols += [pre + "w", pre + "lambda", pre + "window_len", pre + "window_accepts"]
        cols += [f"{pre}m_{j}" for j in range(1, p)]
        cols += [f"{pre}theta_{j}" for j in range(1, p)]
        cols += [f"{pre}gamma_{j}" for j in range(1, p + 1)]
        cols += [pre + "knot_lo"] + [f"{pre}knot_{j}" for j in range(1, J - 1)] + [pre + "knot_hi"]
        cols += [f"{pre}c_{j}" for j in range(1, J + 1)]
        cols += [pre + "center_offset"]
    return cols


def _draw_row(state: ModelState) -> list[float]:
    row = [state.mu, state.sigma2]
    for c in state.components:
        lo, hi = c.ridge.boundary_knots
        row += [c.w, c.lam, len(c.accept_history), sum(c.accept_history)]
        row += list(c.m.astype(float))
        row += list(c.direction.theta)
        row += list(c.direction.gamma)
        row += [lo] + list(c.ridge.interior_knots) + [hi]
        row += list(c.ridge.coeffs)
        row += [c.ridge.center_offset]
    return row


def save_chain(directory: Path, chain: Chain, meta: dict | None = None) -> None:
    """Write ``meta.json``, ``draws.csv`` and ``loglik.bin`` into ``directory``."""
    directory = Path(directory)
    J = chain.config.J if chain.config is not None else 2
    if chain.draws and chain.K:
        J = chain.draws[0].components[0].ridge.coeffs.size
    header = draws_header(chain.K, chain.p, J)
    atomic_write(directory / "draws.csv", _csv_text(header, (_draw_row(s) for s in chain.draws)))
    ll = np.ascontiguousarray(chain.loglik, dtype="<f8")
    atomic_write(directory / "loglik.bin", ll.tobytes(order="C"))
    info = {
        "p": chain.p,
        "K": chain.K,
        "J": J,
        "n_draws": chain.n_draws,
        "loglik": {"rows": int(ll.shape[0]), "cols": int(ll.shape[1]), "dtype": "<f8", "order": "C"},
        "config": config_to_dict(chain.config) if chain.config is not None else None,
    }
    if meta:
        info.update(meta)
    write_json(directory / "meta.json", info)


def load_chain(directory: Path) -> Chain:
    directory = Path(directory)
    if not directory.is_dir():
        raise PPBRError(f"chain directory {directory} does not exist")
    meta = read_json(directory / "meta.json")
    p, K, J = meta["p"], meta["K"], meta["J"]
    with open(directory / "draws.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if header != draws_header(K, p, J):
        raise PPBRError(f"{directory / 'draws.csv'}: unexpected header")
    draws = []
    width = 4 + 2 * (p - 1) + p + J + J + 1
    for row in rows:
        comps = []
        for k in range(K):
            seg = row[2 + k * width: 2 + (k + 1) * width]
            w, lam = seg[0], seg[1]
            # only the window's length and accept count drive adaptation
            n_hist, n_acc = int(seg[2]), int(seg[3])
            history = (True,) * n_acc + (False,) * (n_hist - n_acc)
            pos = 4
            m = np.array(seg[pos: pos + p - 1], dtype=np.int8)
            pos += p - 1
            theta = np.array(seg[pos: pos + p - 1])
            pos += p - 1
            gamma = np.array(seg[pos: pos + p])
            pos += p
            knots = seg[pos: pos + J]
            pos += J
            coeffs = np.array(seg[pos: pos + J])
            pos += J
            offset = seg[pos]
            ridge = RidgeFunction(coeffs, np.array(knots[1:-1]), (knots[0], knots[-1]), offset)
            comps.append(ComponentState(Direction(_ro(gamma), _ro(theta)), ridge, m, w, lam, history))
        draws.append(ModelState(row[0], row[1], tuple(comps)))
    shape = (meta["loglik"]["rows"], meta["loglik"]["cols"])
    ll = np.fromfile(directory / "loglik.bin", dtype="<f8").reshape(shape)
    config = config_from_dict(meta["config"]) if meta.get("config") else None
    return Chain(draws, ll, p, config)


def _ro(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a
