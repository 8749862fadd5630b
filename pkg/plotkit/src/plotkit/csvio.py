"""Readers for the CSV files emitted by the qmflab CLI.

Files carry '#'-prefixed 'key: value' metadata lines before the header row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPECTRUM_HEADER = "index,sigma,sigma_normalized"
RANK_SCAN_HEADER = "N,N_mod_4,qmc,rank,deficit,min_sigma,next_sigma"


class SchemaError(ValueError):
    pass


def _read(path: str) -> tuple[dict, str, list[str]]:
    meta: dict[str, str] = {}
    header = None
    rows: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, val = body.split(":", 1)
                    meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = line
            else:
                rows.append(line)
    if header is None:
        raise SchemaError(f"{path}: no header row found")
    return meta, header, rows


@dataclass(frozen=True)
class SpectrumTable:
    path: str
    meta: dict
    sigma: np.ndarray
    sigma_normalized: np.ndarray

    @property
    def normalization(self) -> str:
        return self.meta.get("normalization", "")

    @property
    def label(self) -> str:
        net = self.meta.get("network", "?")
        return f"{net} (N={self.meta.get('N', '?')})"


def read_spectrum(path: str) -> SpectrumTable:
    meta, header, rows = _read(path)
    if header != SPECTRUM_HEADER:
        raise SchemaError(
            f"{path}: expected header {SPECTRUM_HEADER!r}, got {header!r}"
        )
    sigma, norm = [], []
    for row in rows:
        _idx, s, sn = row.split(",")
        sigma.append(float(s))
        norm.append(float(sn))
    return SpectrumTable(path, meta, np.asarray(sigma), np.asarray(norm))


@dataclass(frozen=True)
class RankScanTable:
    path: str
    meta: dict
    rows: tuple[tuple[int, int, int, int, int, float, float], ...]

    def deficits_by_n(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for n, _m, _q, _r, deficit, _a, _b in self.rows:
            out.setdefault(n, []).append(deficit)
        return out


def read_rank_scan(path: str) -> RankScanTable:
    meta, header, rows = _read(path)
    if header != RANK_SCAN_HEADER:
        raise SchemaError(
            f"{path}: expected header {RANK_SCAN_HEADER!r}, got {header!r}"
        )
    parsed = []
    for row in rows:
        parts = row.split(",")
        if len(parts) != 7:
            raise SchemaError(f"{path}: malformed row {row!r}")
        n, m, q, r, d = (int(x) for x in parts[:5])
        parsed.append((n, m, q, r, d, float(parts[5]), float(parts[6])))
    return RankScanTable(path, meta, tuple(parsed))
