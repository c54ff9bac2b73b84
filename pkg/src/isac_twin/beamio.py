"""Text file formats shared with external beam predictors.

Beam-exchange file
------------------
UTF-8 text made of one or more blocks, one block per slot::

    n_t K slot
    i k re_0 im_0 re_1 im_1 ... re_{n_t-1} im_{n_t-1}
    ...                                   (K lines)

``i`` is the serving RSU (1 or 2) and ``k`` the 0-based vehicle index in the
slot's along-road order.  Floats are written with ``repr`` so a write/read
cycle is bit-exact.  Blank lines and lines starting with ``#`` are ignored.

Dataset file
------------
One header line ``dataset n_t=<n_t> n_r=<n_r> features=<F> labels=<L>``
followed by records ``slot k f_1 ... f_F l_1 ... l_L``.  Feature order:
``Re r (n_r), Im r (n_r), Re f_prev (n_t), Im f_prev (n_t), nu, mu``, all
taken from the vehicle's previous slot (zeros when it has none).  Label
order: ``Re f (n_t), Im f (n_t), rsu`` with ``rsu`` in {1, 2}.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

log = logging.getLogger(__name__)

NORM_SLACK = 1e-6


@dataclass
class BeamBlock:
    slot: int
    rsu: np.ndarray  # (K,) values in {0, 1}
    beams: np.ndarray  # (K, n_t) complex

    @property
    def n_t(self) -> int:
        return self.beams.shape[1]

    @property
    def K(self) -> int:
        return self.beams.shape[0]

    def as_assignment(self):
        """``(xi, F)`` in the solver layout; the unused RSU's column is zero."""
        K = self.K
        xi = np.zeros((K, 2), dtype=int)
        xi[np.arange(K), self.rsu] = 1
        F = np.zeros((2, self.n_t, K), complex)
        F[self.rsu, :, np.arange(K)] = self.beams
        return xi, F


def format_block(block: BeamBlock) -> str:
    lines = [f"{block.n_t} {block.K} {block.slot}"]
    for k in range(block.K):
        parts = [str(int(block.rsu[k]) + 1), str(k)]
        for z in block.beams[k]:
            parts.append(repr(float(z.real)))
            parts.append(repr(float(z.imag)))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def write_beams(path, blocks) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in blocks:
            fh.write(format_block(b))


def _float(tok, line, name):
    try:
        return float(tok)
    except ValueError:
        raise FormatError(f"not a number: {tok!r}", line, name) from None


def _int(tok, line, name):
    try:
        return int(tok)
    except ValueError:
        raise FormatError(f"not an integer: {tok!r}", line, name) from None


def read_beams(path, renormalize: bool = True) -> list:
    """Parse a beam-exchange file into a list of :class:`BeamBlock`.

    Columns whose norm exceeds one by more than 1e-6 are scaled back onto the
    unit sphere and a warning is issued.

    Raises:
        FormatError: malformed header or record, wrong field count, RSU not in
            {1, 2}, out-of-order vehicle index, or fewer/more records than the
            header announces.
    """
    with open(path, encoding="utf-8") as fh:
        rows = [(n, ln.split()) for n, ln in enumerate(fh, start=1) if ln.strip() and not ln.lstrip().startswith("#")]
    blocks = []
    pos = 0
    while pos < len(rows):
        n, head = rows[pos]
        if len(head) != 3:
            raise FormatError(f"block header needs 3 fields, got {len(head)}", n, "header")
        n_t = _int(head[0], n, "n_t")
        K = _int(head[1], n, "K")
        slot = _int(head[2], n, "slot")
        if n_t < 1 or K < 0:
            raise FormatError("n_t must be >= 1 and K >= 0", n, "header")
        rsu = np.zeros(K, dtype=int)
        beams = np.zeros((K, n_t), complex)
        for k in range(K):
            pos += 1
            if pos >= len(rows) or len(rows[pos][1]) == 3:
                where = rows[pos][0] if pos < len(rows) else n
                raise FormatError(f"block announces K={K} but has only {k} records", where, "K")
            ln, tok = rows[pos]
            if len(tok) != 2 + 2 * n_t:
                raise FormatError(f"expected {2 + 2 * n_t} fields, got {len(tok)}", ln, "record")
            i = _int(tok[0], ln, "i")
            if i not in (1, 2):
                raise FormatError(f"RSU index must be 1 or 2, got {i}", ln, "i")
            kk = _int(tok[1], ln, "k")
            if kk != k:
                raise FormatError(f"vehicle index {kk} out of order (expected {k})", ln, "k")
            vals = np.array([_float(t, ln, f"col{j}") for j, t in enumerate(tok[2:])])
            if not np.all(np.isfinite(vals)):
                raise FormatError("non-finite beam entry", ln, "record")
            rsu[k] = i - 1
            beams[k] = vals[0::2] + 1j * vals[1::2]
        pos += 1
        if pos < len(rows) and len(rows[pos][1]) != 3:
            raise FormatError(f"block announces K={K} but has more records", rows[pos][0], "K")
        if renormalize:
            norms = np.linalg.norm(beams, axis=1)
            over = norms > 1.0 + NORM_SLACK
            if np.any(over):
                msg = f"slot {slot}: {int(over.sum())} beam column(s) exceed unit norm; rescaled"
                log.warning(msg)
                warnings.warn(msg, UserWarning, stacklevel=2)
                beams[over] /= norms[over, None]
        blocks.append(BeamBlock(slot, rsu, beams))
    return blocks


def load_external_beams(path) -> dict:
    """Beam blocks keyed by slot."""
    out = {}
    for b in read_beams(path):
        if b.slot in out:
            raise FormatError(f"duplicate block for slot {b.slot}")
        out[b.slot] = b
    return out


# ---------------------------------------------------------------------------
# dataset


def dataset_dims(n_t: int, n_r: int):
    return 2 * n_r + 2 * n_t + 2, 2 * n_t + 1


def dataset_header(n_t: int, n_r: int) -> str:
    nf, nl = dataset_dims(n_t, n_r)
    return f"dataset n_t={n_t} n_r={n_r} features={nf} labels={nl}\n"


def format_record(slot: int, k: int, features, labels) -> str:
    vals = [repr(float(v)) for v in features] + [repr(float(v)) for v in labels]
    return f"{slot} {k} " + " ".join(vals) + "\n"


def write_dataset(path, n_t: int, n_r: int, records) -> int:
    """Write ``(slot, k, features, labels)`` records; returns the record count."""
    nf, nl = dataset_dims(n_t, n_r)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dataset_header(n_t, n_r))
        for slot, k, feat, lab in records:
            if len(feat) != nf or len(lab) != nl:
                raise FormatError(f"record ({slot}, {k}) has {len(feat)}/{len(lab)} values, expected {nf}/{nl}")
            fh.write(format_record(slot, k, feat, lab))
            count += 1
    return count


def read_dataset(path):
    """Parse a dataset file.

    Returns:
        ``(meta, slots, ks, features, labels)`` with ``meta`` the header dict
        and the rest numpy arrays.
    """
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if not head or head[0] != "dataset":
            raise FormatError("missing dataset header", 1, "header")
        meta = {}
        for tok in head[1:]:
            key, _, val = tok.partition("=")
            meta[key] = _int(val, 1, key)
        for key in ("n_t", "n_r", "features", "labels"):
            if key not in meta:
                raise FormatError(f"header lacks {key}", 1, key)
        nf, nl = meta["features"], meta["labels"]
        if (nf, nl) != dataset_dims(meta["n_t"], meta["n_r"]):
            raise FormatError("header dimensions inconsistent with n_t/n_r", 1, "header")
        slots, ks, feats, labs = [], [], [], []
        for n, line in enumerate(fh, start=2):
            tok = line.split()
            if not tok:
                continue
            if len(tok) != 2 + nf + nl:
                raise FormatError(f"expected {2 + nf + nl} fields, got {len(tok)}", n, "record")
            slots.append(_int(tok[0], n, "slot"))
            ks.append(_int(tok[1], n, "k"))
            vals = [_float(t, n, f"v{j}") for j, t in enumerate(tok[2:])]
            feats.append(vals[:nf])
            labs.append(vals[nf:])
    return (
        meta,
        np.array(slots, dtype=int),
        np.array(ks, dtype=int),
        np.array(feats, dtype=float).reshape(-1, nf),
        np.array(labs, dtype=float).reshape(-1, nl),
    )
