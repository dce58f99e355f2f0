"""Repertoire files: a small line-oriented text format.

Header lines are ``key=value``; one elite per body line with
``|``-separated fields.  Reals are written with 17 significant digits
so every 64-bit float round-trips bit-exactly.  Files carry the gait
model fingerprint and loading refuses a mismatch, because stored
descriptors are meaningless under different model constants.
"""
from __future__ import annotations

import numpy as np

from .archive import DistArchive, Elite, GridArchive
from .config import Config

FORMAT_TAG = "hbr v1"

_F = "{:.17g}".format


class RepertoireFormatError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def _fmt_vec(v) -> str:
    return ",".join(_F(float(x)) for x in v)


def _fmt_bits(v) -> str:
    if len(v) == 0:
        return "-"
    return "".join(str(int(b)) for b in v)


def save_repertoire(path, archive, cfg: Config):
    kind = "grid" if isinstance(archive, GridArchive) else "dist"
    elites = sorted(archive.elites, key=lambda e: e.order)
    lines = [FORMAT_TAG, f"kind={kind}"]
    if kind == "grid":
        lines.append(f"dims={','.join(str(d) for d in archive.dims)}")
        lines.append("bounds=" + ";".join(f"{_F(lo)},{_F(hi)}"
                                          for lo, hi in archive.bounds))
        lines.append(f"secondary_dims={archive.secondary_dims}")
        lines.append(f"secondary_slots={int(archive.secondary_slots)}")
    else:
        lines.append(f"l={_F(archive.l)}")
        lines.append(f"primary_dims={archive.primary_dims}")
        lines.append(f"secondary_dims={archive.secondary_dims}")
    lines.append(f"fingerprint={cfg.fingerprint()}")
    lines.append(f"count={len(elites)}")
    for e in elites:
        lines.append("|".join([
            _F(e.fitness),
            _fmt_vec(e.genotype),
            _fmt_vec(e.bd_primary),
            _fmt_bits(e.bd_secondary),
            _F(e.yaw),
        ]))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _parse_header(path, lines):
    if not lines or lines[0] != FORMAT_TAG:
        raise RepertoireFormatError(path, 1, f"expected format tag {FORMAT_TAG!r}")
    header = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=2):
        if "=" not in line:
            raise RepertoireFormatError(path, i, "malformed header line")
        key, _, value = line.partition("=")
        header[key] = value
        if key == "count":
            body_start = i
            break
    if body_start is None:
        raise RepertoireFormatError(path, len(lines), "missing count header")
    return header, body_start


def _parse_elite(path, lineno, line):
    parts = line.split("|")
    if len(parts) != 5:
        raise RepertoireFormatError(path, lineno,
                                    f"expected 5 fields, got {len(parts)}")
    try:
        fitness = float(parts[0])
        genotype = np.array([float(x) for x in parts[1].split(",")])
        bd_primary = np.array([float(x) for x in parts[2].split(",")])
        if parts[3] == "-":
            bd_secondary = np.zeros(0, dtype=np.uint8)
        else:
            bd_secondary = np.array([int(c) for c in parts[3]], dtype=np.uint8)
            if not np.all(bd_secondary <= 1):
                raise ValueError("secondary bits must be 0/1")
        yaw = float(parts[4])
    except ValueError as exc:
        raise RepertoireFormatError(path, lineno, str(exc)) from None
    return Elite(genotype=genotype, fitness=fitness, bd_primary=bd_primary,
                 bd_secondary=bd_secondary, yaw=yaw)


def load_repertoire(path, cfg: Config):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header, body_start = _parse_header(path, lines)

    fp = header.get("fingerprint")
    if fp != cfg.fingerprint():
        raise RepertoireFormatError(
            path, body_start,
            f"model fingerprint {fp} does not match configuration "
            f"{cfg.fingerprint()}; repertoire was trained under other constants")

    kind = header.get("kind")
    if kind == "grid":
        dims = tuple(int(d) for d in header["dims"].split(","))
        bounds = tuple(tuple(float(x) for x in b.split(","))
                       for b in header["bounds"].split(";"))
        archive = GridArchive(dims, bounds,
                              secondary_dims=int(header["secondary_dims"]),
                              secondary_slots=bool(int(header["secondary_slots"])))
    elif kind == "dist":
        archive = DistArchive(float(header["l"]),
                              primary_dims=int(header["primary_dims"]),
                              secondary_dims=int(header["secondary_dims"]))
    else:
        raise RepertoireFormatError(path, 2, f"unknown kind {kind!r}")

    count = int(header["count"])
    body = lines[body_start:]
    if len(body) != count:
        raise RepertoireFormatError(path, body_start,
                                    f"count={count} but {len(body)} elite lines")
    for offset, line in enumerate(body):
        e = _parse_elite(path, body_start + 1 + offset, line)
        if not archive.insert(e):
            raise RepertoireFormatError(
                path, body_start + 1 + offset,
                "elite rejected on reload; file violates container invariants")
    _verify(path, archive)
    return archive


def _verify(path, archive):
    """Re-check container invariants after a load."""
    if isinstance(archive, GridArchive):
        return  # insert() already enforced one-elite-per-cell competition
    l = archive.l
    # within one secondary pattern the full metric reduces to the primary
    # distance; across patterns distances are >= 1 > l by construction
    for rows in archive._pattern_rows.values():
        pts = archive._buf.prim[np.asarray(rows)]
        cell = {}
        inv_l = 1.0 / l
        for i, p in enumerate(pts):
            key = tuple(int(np.floor(c * inv_l)) for c in p)
            cell.setdefault(key, []).append(i)
        for i, p in enumerate(pts):
            key = tuple(int(np.floor(c * inv_l)) for c in p)
            for nb in _neighbor_keys(key):
                for j in cell.get(nb, ()):
                    if j <= i:
                        continue
                    if np.linalg.norm(pts[j] - p) <= l:
                        raise RepertoireFormatError(
                            path, 0, "pairwise descriptor distance <= l")


def _neighbor_keys(key):
    if len(key) == 3:
        a, b, c = key
        for da in (-1, 0, 1):
            for db in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    yield (a + da, b + db, c + dc)
    else:
        stack = [()]
        for k in key:
            stack = [s + (k + d,) for s in stack for d in (-1, 0, 1)]
        yield from stack
