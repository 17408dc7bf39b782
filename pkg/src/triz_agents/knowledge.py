"""TRIZ knowledge base: the 39 parameters, 40 inventive principles and the
classical contradiction matrix.

Data lives in three UTF-8 files under ``data/triz/``:

``parameters.tsv``
    ``id<TAB>name<TAB>description`` with a header row.
``principles.tsv``
    ``id<TAB>name<TAB>description<TAB>sub_principles`` with a header row;
    sub-principles are separated by ``" | "``.
``matrix.txt``
    One non-empty cell per line as ``improving,worsening:id,id,...``.
    Blank lines and ``#`` comments are ignored. A cell that is not listed is
    empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

PARAMETER_COUNT = 39
PRINCIPLE_COUNT = 40

PARAMETERS_FILE = "parameters.tsv"
PRINCIPLES_FILE = "principles.tsv"
MATRIX_FILE = "matrix.txt"


class KnowledgeError(Exception):
    """Base class for knowledge-base errors."""


class MissingFile(KnowledgeError):
    def __init__(self, path: Path):
        super().__init__(f"missing knowledge file: {path}")
        self.path = path


class ParseError(KnowledgeError):
    def __init__(self, path: Path | str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class ValidationError(KnowledgeError):
    pass


class SameParameter(KnowledgeError):
    def __init__(self, parameter_id: int):
        super().__init__(f"improving and worsening parameter are the same ({parameter_id})")
        self.parameter_id = parameter_id


class UnknownParameter(KnowledgeError):
    def __init__(self, ref: object, candidates: Sequence[str] = ()):
        msg = f"unknown TRIZ parameter: {ref!r}"
        if candidates:
            msg += "; did you mean: " + ", ".join(candidates)
        super().__init__(msg)
        self.ref = ref
        self.candidates = list(candidates)


class UnknownPrinciple(KnowledgeError):
    def __init__(self, principle_id: object):
        super().__init__(f"unknown inventive principle: {principle_id!r}")
        self.principle_id = principle_id


@dataclass(frozen=True)
class TrizParameter:
    id: int
    name: str
    description: str


@dataclass(frozen=True)
class InventivePrinciple:
    id: int
    name: str
    description: str
    sub_principles: tuple[str, ...] = ()


@dataclass(frozen=True)
class EngineeringContradiction:
    improving: int
    worsening: int
    rationale: str = ""

    def __post_init__(self) -> None:
        for pid in (self.improving, self.worsening):
            if not 1 <= pid <= PARAMETER_COUNT:
                raise UnknownParameter(pid)
        if self.improving == self.worsening:
            raise SameParameter(self.improving)


@dataclass(frozen=True)
class PhysicalContradiction:
    parameter_name: str
    contradictory_needs: str

    def __post_init__(self) -> None:
        if not self.parameter_name.strip() or not self.contradictory_needs.strip():
            raise ValueError("physical contradiction fields must be non-empty")


@dataclass(frozen=True)
class ContradictionMatrix:
    """Sparse (improving, worsening) -> principle ids. Not symmetric."""

    cells: Mapping[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)

    def get(self, improving: int, worsening: int) -> tuple[int, ...]:
        return self.cells.get((improving, worsening), ())


@dataclass(frozen=True)
class KnowledgeBase:
    parameters: tuple[TrizParameter, ...]
    principles: tuple[InventivePrinciple, ...]
    matrix: ContradictionMatrix

    def parameter(self, parameter_id: int) -> TrizParameter:
        if not isinstance(parameter_id, int) or not 1 <= parameter_id <= len(self.parameters):
            raise UnknownParameter(parameter_id)
        return self.parameters[parameter_id - 1]

    def principle(self, principle_id: int) -> InventivePrinciple:
        if (
            isinstance(principle_id, bool)
            or not isinstance(principle_id, int)
            or not 1 <= principle_id <= len(self.principles)
        ):
            raise UnknownPrinciple(principle_id)
        return self.principles[principle_id - 1]

    def resolve_parameter(self, ref: int | str) -> TrizParameter:
        """Resolve an id or a canonical name (case-insensitive, exact)."""
        if isinstance(ref, int):
            return self.parameter(ref)
        text = ref.strip()
        if text.isdigit():
            return self.parameter(int(text))
        key = text.casefold()
        for p in self.parameters:
            if p.name.casefold() == key:
                return p
        near = [p.name for p in self.parameters if key and key in p.name.casefold()]
        raise UnknownParameter(ref, near)


def default_data_dir() -> Path:
    return Path(str(resources.files("triz_agents") / "data" / "triz"))


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise MissingFile(path)
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise ParseError(path, 1, f"not valid UTF-8: {exc}") from exc


def _parse_id(path: Path, lineno: int, text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(path, lineno, f"expected an integer id, got {text!r}") from None


def _load_parameters(path: Path) -> tuple[TrizParameter, ...]:
    lines = _read_lines(path)
    out: dict[int, TrizParameter] = {}
    names: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        pid = _parse_id(path, lineno, parts[0])
        name = parts[1].strip()
        if not 1 <= pid <= PARAMETER_COUNT:
            raise ValidationError(f"{path}:{lineno}: parameter id {pid} out of range 1..{PARAMETER_COUNT}")
        if pid in out:
            raise ValidationError(f"{path}:{lineno}: duplicate parameter id {pid}")
        if not name:
            raise ValidationError(f"{path}:{lineno}: empty parameter name")
        if name.casefold() in names:
            raise ValidationError(f"{path}:{lineno}: duplicate parameter name {name!r}")
        names.add(name.casefold())
        out[pid] = TrizParameter(pid, name, parts[2].strip())
    if len(out) != PARAMETER_COUNT:
        raise ValidationError(f"{path}: expected {PARAMETER_COUNT} parameters, found {len(out)}")
    return tuple(out[i] for i in range(1, PARAMETER_COUNT + 1))


def _load_principles(path: Path) -> tuple[InventivePrinciple, ...]:
    lines = _read_lines(path)
    out: dict[int, InventivePrinciple] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(path, lineno, f"expected 4 tab-separated fields, got {len(parts)}")
        pid = _parse_id(path, lineno, parts[0])
        if not 1 <= pid <= PRINCIPLE_COUNT:
            raise ValidationError(f"{path}:{lineno}: principle id {pid} out of range 1..{PRINCIPLE_COUNT}")
        if pid in out:
            raise ValidationError(f"{path}:{lineno}: duplicate principle id {pid}")
        if not parts[1].strip():
            raise ValidationError(f"{path}:{lineno}: empty principle name")
        subs = tuple(s.strip() for s in parts[3].split(" | ") if s.strip())
        out[pid] = InventivePrinciple(pid, parts[1].strip(), parts[2].strip(), subs)
    if len(out) != PRINCIPLE_COUNT:
        raise ValidationError(f"{path}: expected {PRINCIPLE_COUNT} principles, found {len(out)}")
    return tuple(out[i] for i in range(1, PRINCIPLE_COUNT + 1))


def _load_matrix(path: Path) -> ContradictionMatrix:
    cells: dict[tuple[int, int], tuple[int, ...]] = {}
    for lineno, raw in enumerate(_read_lines(path), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ParseError(path, lineno, "expected 'improving,worsening:ids'")
        key_parts = key.split(",")
        if len(key_parts) != 2:
            raise ParseError(path, lineno, f"bad cell key {key!r}")
        improving, worsening = (_parse_id(path, lineno, k) for k in key_parts)
        ids = tuple(_parse_id(path, lineno, v) for v in value.split(",")) if value.strip() else ()
        for pid in (improving, worsening):
            if not 1 <= pid <= PARAMETER_COUNT:
                raise ValidationError(f"{path}:{lineno}: parameter id {pid} out of range")
        if improving == worsening:
            raise ValidationError(f"{path}:{lineno}: diagonal cell ({improving},{worsening}) is not allowed")
        if (improving, worsening) in cells:
            raise ValidationError(f"{path}:{lineno}: duplicate cell ({improving},{worsening})")
        for pid in ids:
            if not 1 <= pid <= PRINCIPLE_COUNT:
                raise ValidationError(f"{path}:{lineno}: principle id {pid} out of range")
        if len(set(ids)) != len(ids):
            raise ValidationError(f"{path}:{lineno}: repeated principle id in cell")
        if ids:
            cells[(improving, worsening)] = ids
    if len(cells) >= PARAMETER_COUNT * (PARAMETER_COUNT - 1):
        raise ValidationError(f"{path}: matrix has no empty cells")
    return ContradictionMatrix(MappingProxyType(cells))


def load_knowledge_base(data_dir: Path | str | None = None) -> KnowledgeBase:
    """Load and validate the knowledge base from ``data_dir``.

    Defaults to the bundled data. Raises :class:`MissingFile`,
    :class:`ParseError` or :class:`ValidationError`.
    """
    root = Path(data_dir) if data_dir is not None else default_data_dir()
    return KnowledgeBase(
        parameters=_load_parameters(root / PARAMETERS_FILE),
        principles=_load_principles(root / PRINCIPLES_FILE),
        matrix=_load_matrix(root / MATRIX_FILE),
    )


def list_parameters(kb: KnowledgeBase) -> list[TrizParameter]:
    return list(kb.parameters)


def lookup_matrix(kb: KnowledgeBase, improving: int, worsening: int) -> list[int]:
    """Principle ids recorded for the cell; an empty list means an empty cell."""
    for pid in (improving, worsening):
        if isinstance(pid, bool) or not isinstance(pid, int) or not 1 <= pid <= PARAMETER_COUNT:
            raise UnknownParameter(pid)
    if improving == worsening:
        raise SameParameter(improving)
    return list(kb.matrix.get(improving, worsening))


def principle_details(kb: KnowledgeBase, ids: Sequence[int]) -> list[InventivePrinciple]:
    return [kb.principle(i) for i in ids]
