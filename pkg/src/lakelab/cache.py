"""Content-addressed cache for solved value functions.

An entry is a ``.npz`` file named by the sha256 of (params, curve name, grid,
solver tolerance), written atomically (temp file + ``os.replace``) so a
crashed run never leaves a half-written entry behind.  Loading is strictly
defensive: a corrupt or stale entry -- bad zip, wrong format version, key
mismatch, or arrays that fail the value-function invariants -- is treated as
a miss with a warning, and the value is recomputed and rewritten.  Only real
I/O trouble (permissions, disk) raises :class:`CacheError`.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import os
import tempfile
import zipfile
from typing import Optional, Tuple

import numpy as np

from .hjb import GridSpec, ValueFunction, solve_hjb
from .model import LakeParams, RecyclingCurve

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

_META_SCALARS = (
    "iterations",
    "residual_norm",
    "residual_norm_raw",
    "policy_change",
    "boundary_gap_value",
    "boundary_gap_curvature",
    "far_field_estimate",
    "u_floor_hits",
)


class CacheError(OSError):
    """Cache directory or entry could not be read/written (I/O level)."""


def value_key(params: LakeParams, curve_name: str, gridspec: GridSpec, tol: float) -> str:
    """sha256 over the exact inputs that determine a solve."""
    blob = "|".join(
        [
            f"format={FORMAT_VERSION}",
            f"b={params.b!r}",
            f"c={params.c!r}",
            f"rho={params.rho!r}",
            f"sigma={params.sigma!r}",
            f"curve={curve_name}",
            f"x_max={gridspec.x_max!r}",
            f"n={gridspec.n}",
            f"tol={tol!r}",
        ]
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def entry_path(cache_dir: str, key: str) -> str:
    return os.path.join(cache_dir, f"value-{key}.npz")


def store_value(cache_dir: str, key: str, valuefn: ValueFunction, meta: dict) -> str:
    """Atomically persist a solved value function; returns the entry path."""
    payload = dict(meta)
    payload["key"] = key
    payload["format"] = FORMAT_VERSION
    payload["sigma"] = float(valuefn.sigma)
    payload["x_max"] = float(valuefn.grid.x_max)
    payload["n"] = int(valuefn.grid.n)
    path = entry_path(cache_dir, key)
    try:
        os.makedirs(cache_dir, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    except OSError as err:
        raise CacheError(f"cannot write cache directory {cache_dir!r}: {err}") from err
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(
                fh,
                V=valuefn.V,
                Vp=valuefn.Vp,
                meta=np.array(json.dumps(payload, sort_keys=True)),
            )
        os.replace(tmp, path)
    except OSError as err:
        raise CacheError(f"cannot write cache entry {path!r}: {err}") from err
    finally:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
    return path


def load_value(cache_dir: str, key: str) -> Optional[Tuple[ValueFunction, dict]]:
    """Load an entry, or None on miss *or* corruption (logged as a warning)."""
    path = entry_path(cache_dir, key)
    try:
        fh = open(path, "rb")
    except FileNotFoundError:
        return None
    except OSError as err:
        raise CacheError(f"cannot read cache entry {path!r}: {err}") from err
    try:
        with fh:
            with np.load(fh, allow_pickle=False) as data:
                meta = json.loads(str(data["meta"]))
                if meta.get("format") != FORMAT_VERSION or meta.get("key") != key:
                    raise ValueError("format or key mismatch")
                grid = GridSpec(x_max=float(meta["x_max"]), n=int(meta["n"]))
                valuefn = ValueFunction(
                    grid=grid,
                    V=np.asarray(data["V"], dtype=float),
                    Vp=np.asarray(data["Vp"], dtype=float),
                    sigma=float(meta["sigma"]),
                    provenance="hjb",
                )
                if valuefn.V.shape != (grid.n,) or valuefn.Vp.shape != (grid.n,):
                    raise ValueError("array shape mismatch")
    except (ValueError, KeyError, TypeError, EOFError, zipfile.BadZipFile, json.JSONDecodeError) as err:
        logger.warning("cache entry %s is corrupt (%s); recomputing", path, err)
        return None
    return valuefn, meta


def cached_solve(
    params: LakeParams,
    curve: RecyclingCurve,
    gridspec: GridSpec,
    tol: float = 1e-9,
    max_iter: int = 200,
    cache_dir: Optional[str] = None,
) -> Tuple[ValueFunction, dict, bool]:
    """Solve the HJB problem through the cache; returns (valuefn, meta, hit).

    ``meta`` carries the solver statistics (identical whether the entry was
    computed or loaded, so downstream reports are byte-stable across runs).
    """
    if cache_dir is None:
        valuefn, report = solve_hjb(params, curve, gridspec, tol=tol, max_iter=max_iter)
        return valuefn, _report_meta(report), False
    key = value_key(params, curve.name, gridspec, tol)
    found = load_value(cache_dir, key)
    if found is not None:
        valuefn, meta = found
        return valuefn, meta, True
    valuefn, report = solve_hjb(params, curve, gridspec, tol=tol, max_iter=max_iter)
    meta = _report_meta(report)
    store_value(cache_dir, key, valuefn, meta)
    return valuefn, meta, False


def _report_meta(report) -> dict:
    return {name: _plain(getattr(report, name)) for name in _META_SCALARS}


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value
