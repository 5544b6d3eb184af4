from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

# Token kinds produced by the tokenizer
ATOM = "atom"
BOND = "bond"
BRANCH_OPEN = "branch_open"
BRANCH_CLOSE = "branch_close"
RING_DIGIT = "ring_digit"
BRACKET_ATOM = "bracket_atom"
DOT = "dot"

AROMATIC_ELEMENTS = frozenset({"B", "C", "N", "O", "P", "S", "As", "Se"})

SINGLE = 1.0
DOUBLE = 2.0
TRIPLE = 3.0
AROMATIC = 1.5


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: Optional[int] = None  # None for organic-subset atoms (implicit H)
    degree: float = 0.0  # bond-order sum, filled in once all bonds are known
    position: int = 0


@dataclass(frozen=True)
class Bond:
    order: float
    endpoints: Tuple[int, int]

    def other(self, atom_index: int) -> int:
        a, b = self.endpoints
        return b if atom_index == a else a


@dataclass
class MolGraph:
    atoms: List[Atom] = field(default_factory=list)
    bonds: List[Bond] = field(default_factory=list)
    ring_closures: Dict[str, Tuple[int, Optional[float]]] = field(default_factory=dict)

    def neighbors(self, atom_index: int) -> List[Tuple[int, Bond]]:
        return [(bond.other(atom_index), bond) for bond in self.bonds if atom_index in bond.endpoints]

    def adjacency(self) -> List[List[Tuple[int, float]]]:
        adj: List[List[Tuple[int, float]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            a, b = bond.endpoints
            adj[a].append((b, bond.order))
            adj[b].append((a, bond.order))
        return adj


Location = Union[int, str]


@dataclass(frozen=True)
class Violation:
    location: Location  # atom index, or "pos:<n>" for syntax positions
    reason: str


@dataclass(frozen=True)
class ValidityReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations
