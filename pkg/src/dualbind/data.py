"""Dataset records, file formats, synthetic generation, and the 70/15/15 split.

Two on-disk formats are supported:

* FASTA for sequences: ``>`` header lines, bodies of uppercase residues; an
  optional ``mut=<t>`` key in the header description marks the mutation
  position.
* JSON-lines for molecular complexes, one object per line:
  ``{"id": str, "atoms": [{"element": str, "features": [float...],
  "xyz": [x, y, z]}], "bonds": [[i, j, "single"|"double"|"triple"|"aromatic"]],
  "affinity": float}``

The synthetic generator plants a ground truth that needs both modalities:
``y = alpha * mean_degree + beta * motif_count + gamma * (mean_degree *
motif_count) + noise``, where ``motif_count`` copies of "KR" are planted
inside the mutation window. The interaction term is what makes either
modality alone insufficient.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .rng import XorShiftRng, derive

AMINO_ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
NUCLEOTIDE_ALPHABET = "ACGTN"
BOND_TYPES = ("single", "double", "triple", "aromatic")


class FastaFormatError(ValueError):
    pass


class ComplexFormatError(ValueError):
    pass


def alphabet_for(name: str) -> str:
    if name == "amino":
        return AMINO_ALPHABET
    if name == "nucleotide":
        return NUCLEOTIDE_ALPHABET
    raise ValueError(f"unknown alphabet {name!r}; expected 'amino' or 'nucleotide'")


# ---------------------------------------------------------------------------
# records


@dataclass
class Atom:
    element: str
    features: list[float]
    xyz: tuple[float, float, float]


@dataclass
class Bond:
    i: int
    j: int
    bond_type: str


@dataclass
class ComplexRecord:
    id: str
    atoms: list[Atom]
    bonds: list[Bond]
    affinity: float

    def validate(self) -> None:
        n = len(self.atoms)
        if n < 1:
            raise ComplexFormatError(f"record {self.id!r}: atom count must be >= 1")
        if not math.isfinite(self.affinity):
            raise ComplexFormatError(f"record {self.id!r}: affinity must be finite")
        seen = set()
        for b in self.bonds:
            if not (0 <= b.i < n and 0 <= b.j < n):
                raise ComplexFormatError(f"record {self.id!r}: bond index out of range: [{b.i}, {b.j}] with {n} atoms")
            if b.i == b.j:
                raise ComplexFormatError(f"record {self.id!r}: self-bond on atom {b.i}")
            if b.bond_type not in BOND_TYPES:
                raise ComplexFormatError(f"record {self.id!r}: unknown bond type {b.bond_type!r}")
            key = (min(b.i, b.j), max(b.i, b.j))
            if key in seen:
                raise ComplexFormatError(f"record {self.id!r}: duplicate undirected bond {key}")
            seen.add(key)
        for idx, a in enumerate(self.atoms):
            if len(a.xyz) != 3 or not all(math.isfinite(c) for c in a.xyz):
                raise ComplexFormatError(f"record {self.id!r}: atom {idx} has bad coordinates {a.xyz!r}")


@dataclass
class SequenceRecord:
    id: str
    residues: str
    mutation_pos: int | None = None

    def validate(self, alphabet: str) -> None:
        if not self.residues:
            raise FastaFormatError(f"record {self.id!r}: empty sequence")
        for ch in self.residues:
            if ch not in alphabet:
                raise FastaFormatError(f"record {self.id!r}: illegal character {ch!r} for the active alphabet")
        if self.mutation_pos is not None and not 0 <= self.mutation_pos < len(self.residues):
            raise FastaFormatError(f"record {self.id!r}: mutation_pos {self.mutation_pos} outside sequence of length {len(self.residues)}")


@dataclass
class PairedSample:
    complex: ComplexRecord
    sequence: SequenceRecord
    label: float


@dataclass
class DatasetSplit:
    train: list[int]
    val: list[int]
    test: list[int]
    seed: int

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "train": self.train, "val": self.val, "test": self.test})

    @staticmethod
    def from_json(text: str) -> "DatasetSplit":
        obj = json.loads(text)
        return DatasetSplit(train=list(obj["train"]), val=list(obj["val"]), test=list(obj["test"]), seed=int(obj["seed"]))


# ---------------------------------------------------------------------------
# FASTA


def parse_fasta(text: str, alphabet: str = "amino") -> list[SequenceRecord]:
    """One record per '>' header; multi-line bodies are joined.

    The id is the header token up to the first whitespace; a ``mut=<t>``
    key anywhere later in the header sets mutation_pos.
    """
    symbols = alphabet_for(alphabet)
    records: list[SequenceRecord] = []
    current: SequenceRecord | None = None
    body_parts: list[str] = []

    def finish() -> None:
        if current is None:
            return
        current.residues = "".join(body_parts)
        current.validate(symbols)
        records.append(current)

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            finish()
            header = line[1:].strip()
            if not header:
                raise FastaFormatError(f"line {lineno}: empty FASTA header")
            parts = header.split()
            seq_id = parts[0]
            mutation_pos = None
            for tok in parts[1:]:
                if tok.startswith("mut="):
                    try:
                        mutation_pos = int(tok[4:])
                    except ValueError:
                        raise FastaFormatError(f"line {lineno}: bad mut= value in header {seq_id!r}") from None
            current = SequenceRecord(id=seq_id, residues="", mutation_pos=mutation_pos)
            body_parts = []
        else:
            if current is None:
                raise FastaFormatError(f"line {lineno}: sequence body before any '>' header")
            for ch in line:
                if ch not in symbols:
                    raise FastaFormatError(f"record {current.id!r}, line {lineno}: illegal character {ch!r}")
            body_parts.append(line)
    finish()
    return records


def write_fasta(records: Iterable[SequenceRecord]) -> str:
    lines = []
    for rec in records:
        header = f">{rec.id}"
        if rec.mutation_pos is not None:
            header += f" mut={rec.mutation_pos}"
        lines.append(header)
        lines.append(rec.residues)
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# complex JSONL


def _complex_from_obj(obj: dict, lineno: int) -> ComplexRecord:
    try:
        atoms = [Atom(element=a["element"], features=[float(x) for x in a.get("features", [])], xyz=tuple(float(c) for c in a["xyz"])) for a in obj["atoms"]]
        bonds = [Bond(i=int(b[0]), j=int(b[1]), bond_type=b[2]) for b in obj["bonds"]]
        rec = ComplexRecord(id=str(obj["id"]), atoms=atoms, bonds=bonds, affinity=float(obj["affinity"]))
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ComplexFormatError(f"line {lineno}: malformed complex record: {exc}") from None
    rec.validate()
    return rec


def parse_complex_jsonl(stream: TextIO | str) -> list[ComplexRecord]:
    """Parse one JSON object per line, preserving input order."""
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream.read().splitlines()
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ComplexFormatError(f"line {lineno}: invalid JSON: {exc}") from None
        records.append(_complex_from_obj(obj, lineno))
    return records


def complex_to_obj(rec: ComplexRecord) -> dict:
    return {
        "id": rec.id,
        "atoms": [{"element": a.element, "features": a.features, "xyz": list(a.xyz)} for a in rec.atoms],
        "bonds": [[b.i, b.j, b.bond_type] for b in rec.bonds],
        "affinity": rec.affinity,
    }


def write_complex_jsonl(records: Iterable[ComplexRecord]) -> str:
    return "".join(json.dumps(complex_to_obj(r)) + "\n" for r in records)


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass
class GeneratorParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    sigma: float = 0.1
    min_atoms: int = 4
    max_atoms: int = 16
    min_seq_len: int = 24
    max_seq_len: int = 64
    max_motifs: int = 4
    motif: str = "KR"
    window_half_width: int = 8
    extra_feature_count: int = 2
    # extra edges beyond the spanning tree, as a multiple of atom count;
    # wide so mean degree varies enough for the graph branch to matter
    extra_edge_factor: float = 2.0

    elements: tuple[str, ...] = ("C", "N", "O", "S", "P", "H", "F", "Cl", "Br", "I")


def _random_graph(rng: XorShiftRng, params: GeneratorParams) -> tuple[list[Atom], list[Bond], float]:
    n = rng.randint(params.min_atoms, params.max_atoms)
    edges: set[tuple[int, int]] = set()
    for v in range(1, n):
        u = rng.randint(0, v - 1)
        edges.add((u, v))
    max_extra = int(params.extra_edge_factor * n)
    want_extra = rng.randint(0, max_extra) if max_extra > 0 else 0
    possible = n * (n - 1) // 2
    attempts = 0
    while len(edges) < min(n - 1 + want_extra, possible) and attempts < 20 * possible:
        attempts += 1
        i = rng.randint(0, n - 1)
        j = rng.randint(0, n - 1)
        if i == j:
            continue
        edges.add((min(i, j), max(i, j)))
    atoms = [
        Atom(
            element=rng.choice(params.elements),
            features=[rng.uniform() for _ in range(params.extra_feature_count)],
            xyz=(rng.uniform() * 10.0, rng.uniform() * 10.0, rng.uniform() * 10.0),
        )
        for _ in range(n)
    ]
    bonds = [Bond(i=i, j=j, bond_type=rng.choice(BOND_TYPES)) for i, j in sorted(edges)]
    mean_degree = 2.0 * len(bonds) / n
    return atoms, bonds, mean_degree


def _random_sequence(rng: XorShiftRng, params: GeneratorParams) -> tuple[str, int, int]:
    """Sequence with exactly ``m`` planted motif copies inside the window.

    The base sequence is drawn so the motif never occurs by accident
    (no 'R' directly after a 'K'), keeping the planted count exact.
    """
    length = rng.randint(params.min_seq_len, params.max_seq_len)
    k = params.window_half_width
    chars: list[str] = []
    for _ in range(length):
        ch = AMINO_ALPHABET[rng.randint(0, len(AMINO_ALPHABET) - 1)]
        while chars and chars[-1] == params.motif[0] and ch == params.motif[1]:
            ch = AMINO_ALPHABET[rng.randint(0, len(AMINO_ALPHABET) - 1)]
        chars.append(ch)

    t = rng.randint(k, length - 1 - k) if length > 2 * k else length // 2
    m = rng.randint(0, params.max_motifs)
    lo = max(0, t - k)
    hi = min(length - 2, t + k - 1)  # motif start so both chars stay inside the window
    starts: list[int] = []
    guard = 0
    while len(starts) < m and guard < 200:
        guard += 1
        p = rng.randint(lo, hi)
        if all(abs(p - q) >= 2 for q in starts):
            starts.append(p)
    for p in starts:
        chars[p] = params.motif[0]
        chars[p + 1] = params.motif[1]
    # planting may not reach m if the window is crowded; count what landed
    seq = "".join(chars)
    planted = len(starts)
    return seq, t, planted


def synthetic_label(mean_degree: float, motif_count: int, params: GeneratorParams, noise: float = 0.0) -> float:
    """Closed-form ground truth the generator uses."""
    return params.alpha * mean_degree + params.beta * motif_count + params.gamma * mean_degree * motif_count + noise


def generate_synthetic(n: int, seed: int, params: GeneratorParams | None = None) -> list[PairedSample]:
    """Deterministic synthetic dataset; sample i depends only on (seed, i)."""
    if n < 1:
        raise ValueError(f"generate_synthetic: n must be >= 1, got {n}")
    params = params or GeneratorParams()
    samples = []
    for i in range(n):
        rng = XorShiftRng(derive(seed, i))
        atoms, bonds, mean_degree = _random_graph(rng, params)
        seq, t, motifs = _random_sequence(rng, params)
        noise = rng.normal(0.0, params.sigma) if params.sigma > 0 else 0.0
        y = synthetic_label(mean_degree, motifs, params, noise)
        sample_id = f"syn-{i:06d}"
        samples.append(
            PairedSample(
                complex=ComplexRecord(id=sample_id, atoms=atoms, bonds=bonds, affinity=y),
                sequence=SequenceRecord(id=sample_id, residues=seq, mutation_pos=t),
                label=y,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# splitting


def split(n: int, seed: int, fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)) -> DatasetSplit:
    """Seeded shuffle then contiguous train/val/test partition.

    Val and test sizes are floored; train absorbs the rounding remainder.
    """
    if n < 3:
        raise ValueError(f"split: need n >= 3, got {n}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split: fractions {fractions} do not sum to 1")
    n_val = int(fractions[1] * n)
    n_test = int(fractions[2] * n)
    n_train = n - n_val - n_test
    indices = list(range(n))
    XorShiftRng(derive(seed, 0x5EED)).shuffle(indices)
    return DatasetSplit(
        train=indices[:n_train],
        val=indices[n_train : n_train + n_val],
        test=indices[n_train + n_val :],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# pairing


def pair_records(
    complexes: list[ComplexRecord], sequences: list[SequenceRecord]
) -> tuple[list[PairedSample], list[str]]:
    """Pair complex and sequence records by id, preserving complex-file order.

    Returns (paired samples, unpaired ids from either side).
    """
    seq_by_id = {s.id: s for s in sequences}
    paired = []
    unpaired = []
    used = set()
    for c in complexes:
        s = seq_by_id.get(c.id)
        if s is None:
            unpaired.append(c.id)
            continue
        used.add(c.id)
        paired.append(PairedSample(complex=c, sequence=s, label=c.affinity))
    unpaired.extend(s.id for s in sequences if s.id not in used)
    return paired, unpaired
