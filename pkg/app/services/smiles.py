"""
SMILES grammar and validity checking

Tokenizes, parses and validates single-component SMILES strings without an
external chemistry toolkit, and provides the string-distance and canonical
re-emission utilities used by the data pipeline and the evaluation suite.
"""

import re
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

from app.models.molecule import (
    ATOM,
    AROMATIC,
    AROMATIC_ELEMENTS,
    BOND,
    BRACKET_ATOM,
    BRANCH_CLOSE,
    BRANCH_OPEN,
    DOT,
    DOUBLE,
    RING_DIGIT,
    SINGLE,
    TRIPLE,
    Atom,
    Bond,
    MolGraph,
    Token,
    ValidityReport,
    Violation,
)
from app.utils.exceptions import (
    DanglingBond,
    DuplicateBond,
    EmptySmiles,
    InvalidBracketAtom,
    MultiComponent,
    NotValid,
    RingBondConflict,
    SmilesError,
    UnbalancedBranch,
    UnclosedRing,
    UnknownCharacter,
    UnterminatedBracket,
)

ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_SUBSET = ("b", "c", "n", "o", "p", "s")

# '/' and '\' are directional single bonds; direction is dropped
BOND_ORDERS: Dict[str, float] = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, "/": SINGLE, "\\": SINGLE}

VALENCES: Dict[str, Tuple[int, ...]] = {
    "H": (1,),
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
    "Si": (4,),
    "As": (3, 5),
    "Se": (2, 4, 6),
}

ELEMENTS = frozenset(
    """H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn
    Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce
    Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn
    Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr""".split()
)

MAX_CHARGE = 4

# valences implicit hydrogens may fill up to; N reaches 5 through bonds only
HYDROGEN_FILL: Dict[str, Tuple[int, ...]] = {"N": (3,)}

# labellings tried when breaking symmetric ties in canonical ranking
MAX_TIE_LEAVES = 512

_BRACKET_RE = re.compile(
    r"^\[(?P<isotope>\d+)?"
    r"(?P<symbol>[A-Z][a-z]?|se|as|[bcnops])"
    r"(?P<chirality>@[@A-Z0-9]*)?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>[+-]+\d*)?"
    r"(?::\d+)?\]$"
)


# Tokenizer

def tokenize(s: str) -> List[Token]:
    """Split a SMILES string into tokens whose texts concatenate back to s"""
    if not s:
        raise EmptySmiles("Empty SMILES string", 0)

    tokens: List[Token] = []
    i = 0
    n = len(s)
    while i < n:
        ch = s[i]
        if ch == "[":
            j = s.find("]", i + 1)
            if j < 0:
                raise UnterminatedBracket("Bracket atom has no closing ']'", i)
            tokens.append(Token(BRACKET_ATOM, s[i:j + 1], i))
            i = j + 1
        elif s.startswith("Cl", i) or s.startswith("Br", i):
            tokens.append(Token(ATOM, s[i:i + 2], i))
            i += 2
        elif ch in ORGANIC_SUBSET or ch in AROMATIC_SUBSET:
            tokens.append(Token(ATOM, ch, i))
            i += 1
        elif ch in BOND_ORDERS:
            tokens.append(Token(BOND, ch, i))
            i += 1
        elif ch == "(":
            tokens.append(Token(BRANCH_OPEN, ch, i))
            i += 1
        elif ch == ")":
            tokens.append(Token(BRANCH_CLOSE, ch, i))
            i += 1
        elif ch.isdigit():
            tokens.append(Token(RING_DIGIT, ch, i))
            i += 1
        elif ch == "%" and s[i + 1:i + 3].isdigit() and len(s[i + 1:i + 3]) == 2:
            tokens.append(Token(RING_DIGIT, s[i:i + 3], i))
            i += 3
        elif ch == ".":
            tokens.append(Token(DOT, ch, i))
            i += 1
        else:
            raise UnknownCharacter(f"Unsupported character {ch!r}", i)
    return tokens


# Parser

def _parse_charge(text: str, position: int) -> int:
    sign = 1 if text[0] == "+" else -1
    signs = text.rstrip("0123456789")
    digits = text[len(signs):]
    if any(c != text[0] for c in signs):
        raise InvalidBracketAtom(f"Mixed charge signs in {text!r}", position)
    if digits:
        if len(signs) != 1:
            raise InvalidBracketAtom(f"Malformed charge {text!r}", position)
        charge = sign * int(digits)
    else:
        charge = sign * len(signs)
    if abs(charge) > MAX_CHARGE:
        raise InvalidBracketAtom(f"Formal charge {charge} outside [-{MAX_CHARGE}, {MAX_CHARGE}]", position)
    return charge


def _bracket_atom(token: Token) -> Atom:
    match = _BRACKET_RE.match(token.text)
    if match is None:
        raise InvalidBracketAtom(f"Cannot read bracket atom {token.text!r}", token.position)

    symbol = match.group("symbol")
    aromatic = symbol.islower()
    element = symbol.capitalize() if aromatic else symbol
    if element not in ELEMENTS:
        raise InvalidBracketAtom(f"Unknown element {symbol!r}", token.position)

    hcount = match.group("hcount")
    explicit_h = 0
    if hcount:
        explicit_h = int(hcount[1:]) if len(hcount) > 1 else 1

    charge = 0
    if match.group("charge"):
        charge = _parse_charge(match.group("charge"), token.position)

    return Atom(
        element=element,
        aromatic=aromatic,
        formal_charge=charge,
        explicit_h=explicit_h,
        position=token.position,
    )


def _organic_atom(token: Token) -> Atom:
    aromatic = token.text in AROMATIC_SUBSET
    element = token.text.upper() if aromatic else token.text
    return Atom(element=element, aromatic=aromatic, position=token.position)


def parse(tokens: Sequence[Token]) -> MolGraph:
    """Build the molecular graph, matching branches and ring closures"""
    if not tokens:
        raise EmptySmiles("No tokens to parse", 0)

    atoms: List[Atom] = []
    bonds: List[Bond] = []
    seen_pairs = set()
    branch_stack: List[Tuple[int, int, int]] = []  # (atom, position, atom count at open)
    ring_open: Dict[str, Tuple[int, Optional[float], int]] = {}
    prev: Optional[int] = None
    pending: Optional[Tuple[float, int]] = None  # (order, position)
    branch_started = False  # '(' seen, no atom yet

    def default_order(a: int, b: int) -> float:
        return AROMATIC if atoms[a].aromatic and atoms[b].aromatic else SINGLE

    def add_bond(a: int, b: int, order: float, position: int) -> None:
        if a == b:
            raise DuplicateBond("Ring bond closes on its own atom", position)
        key = frozenset((a, b))
        if key in seen_pairs:
            raise DuplicateBond(f"Atoms {a} and {b} are already bonded", position)
        seen_pairs.add(key)
        bonds.append(Bond(order=order, endpoints=(a, b)))

    for token in tokens:
        kind = token.kind
        if kind in (ATOM, BRACKET_ATOM):
            atom = _bracket_atom(token) if kind == BRACKET_ATOM else _organic_atom(token)
            index = len(atoms)
            atoms.append(atom)
            if prev is not None:
                order = pending[0] if pending else default_order(prev, index)
                add_bond(prev, index, order, token.position)
            elif pending:
                raise DanglingBond("Bond has no atom on its left", pending[1])
            pending = None
            prev = index
            branch_started = False
        elif kind == BOND:
            if prev is None or pending:
                raise DanglingBond(f"Bond {token.text!r} is not between two atoms", token.position)
            pending = (BOND_ORDERS[token.text], token.position)
        elif kind == BRANCH_OPEN:
            if prev is None:
                raise UnbalancedBranch("Branch opened before any atom", token.position)
            if pending:
                raise DanglingBond("Bond is not followed by an atom or ring digit", pending[1])
            branch_stack.append((prev, token.position, len(atoms)))
            branch_started = True
        elif kind == BRANCH_CLOSE:
            if not branch_stack:
                raise UnbalancedBranch("')' without matching '('", token.position)
            if pending:
                raise DanglingBond("Bond is not followed by an atom or ring digit", pending[1])
            anchor, _, count_at_open = branch_stack.pop()
            if len(atoms) == count_at_open:
                raise UnbalancedBranch("Empty branch", token.position)
            prev = anchor
        elif kind == RING_DIGIT:
            if prev is None:
                raise DanglingBond("Ring bond digit has no atom", token.position)
            if branch_started:
                raise UnbalancedBranch("Ring bond digit cannot start a branch", token.position)
            order = pending[0] if pending else None
            pending = None
            label = token.text
            if label in ring_open:
                partner, open_order, _ = ring_open.pop(label)
                if open_order is not None and order is not None and open_order != order:
                    raise RingBondConflict(f"Ring bond {label} has conflicting bond orders", token.position)
                resolved = order if order is not None else open_order
                if resolved is None:
                    resolved = default_order(partner, prev)
                add_bond(partner, prev, resolved, token.position)
            else:
                ring_open[label] = (prev, order, token.position)
        elif kind == DOT:
            raise MultiComponent("Multi-component SMILES are not supported", token.position)
        else:
            raise SmilesError(f"Unexpected token kind {kind!r}", token.position)

    if pending:
        raise DanglingBond("Bond is not followed by an atom or ring digit", pending[1])
    if branch_stack:
        raise UnbalancedBranch("'(' is never closed", branch_stack[-1][1])
    if ring_open:
        label, (_, _, position) = next(iter(ring_open.items()))
        raise UnclosedRing(label, position)

    degrees = [0.0] * len(atoms)
    for bond in bonds:
        a, b = bond.endpoints
        degrees[a] += bond.order
        degrees[b] += bond.order
    atoms = [replace(atom, degree=degree) for atom, degree in zip(atoms, degrees)]
    return MolGraph(atoms=atoms, bonds=bonds, ring_closures={})


def parse_smiles(s: str) -> MolGraph:
    return parse(tokenize(s))


# Validation

def allowed_valences(element: str, charge: int) -> Optional[Tuple[int, ...]]:
    """Valence table adjusted for formal charge (isoelectronic shift)"""
    base = VALENCES.get(element)
    if base is None:
        return None
    if charge == 0:
        return base
    if element in ("H", "B", "C", "Si"):
        shifted = [v - abs(charge) for v in base]
    else:
        shifted = [v + charge for v in base]
    return tuple(v for v in shifted if v >= 0)


def _bond_valence(g: MolGraph, index: int) -> int:
    # aromatic bonds count once; the shared pi bond is accounted separately
    total = 0
    for _, bond in g.neighbors(index):
        total += 1 if bond.order == AROMATIC else int(bond.order)
    return total


def implicit_hydrogens(g: MolGraph, index: int) -> int:
    """Hydrogens implied for an organic-subset atom (lowest matching valence)"""
    atom = g.atoms[index]
    if atom.explicit_h is not None:
        return 0
    used = _bond_valence(g, index)
    valences = VALENCES.get(atom.element, ())
    if atom.aromatic:
        # one valence unit goes to the ring pi system
        lowest = valences[0] if valences else 0
        return max(0, lowest - used - 1)
    for valence in HYDROGEN_FILL.get(atom.element, valences):
        if valence >= used:
            return valence - used
    return 0


def total_hydrogens(g: MolGraph, index: int) -> int:
    atom = g.atoms[index]
    if atom.explicit_h is not None:
        return atom.explicit_h
    return implicit_hydrogens(g, index)


def _in_aromatic_cycle(g: MolGraph, adjacency: List[List[Tuple[int, float]]], index: int) -> bool:
    aromatic = [atom.aromatic for atom in g.atoms]
    for neighbor, _ in adjacency[index]:
        if not aromatic[neighbor]:
            continue
        # is neighbor reachable from index without the direct edge?
        stack = [neighbor]
        seen = {neighbor}
        while stack:
            current = stack.pop()
            for nxt, _ in adjacency[current]:
                if not aromatic[nxt]:
                    continue
                if current == neighbor and nxt == index:
                    continue
                if nxt == index:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    return False


def validate(g: MolGraph) -> ValidityReport:
    """Check every atom against the valence table and aromatic ring membership"""
    violations: List[Violation] = []
    adjacency = g.adjacency()
    for index, atom in enumerate(g.atoms):
        allowed = allowed_valences(atom.element, atom.formal_charge)
        if allowed is None:
            violations.append(Violation(index, f"no valence rule for element {atom.element}"))
            continue
        if not allowed:
            violations.append(Violation(index, f"{atom.element} cannot carry charge {atom.formal_charge:+d}"))
            continue
        total = _bond_valence(g, index) + total_hydrogens(g, index)
        if atom.aromatic:
            if total > max(allowed):
                violations.append(
                    Violation(index, f"{atom.element} valence {total} exceeds allowed {max(allowed)}")
                )
        elif total not in allowed and total > min(allowed):
            # below the lowest valence is a radical; between states is not
            violations.append(
                Violation(index, f"{atom.element} valence {total} is not one of {allowed}")
            )
        if atom.aromatic:
            if atom.element not in AROMATIC_ELEMENTS:
                violations.append(Violation(index, f"{atom.element} cannot be aromatic"))
            elif not _in_aromatic_cycle(g, adjacency, index):
                violations.append(Violation(index, "aromatic atom outside an aromatic ring"))
    return ValidityReport(violations=tuple(violations))


def validate_smiles(s: str) -> ValidityReport:
    """Like validate, but syntax errors become a violation at their position"""
    try:
        return validate(parse(tokenize(s)))
    except SmilesError as e:
        location = f"pos:{e.position}" if e.position is not None else "pos:?"
        return ValidityReport(violations=(Violation(location, str(e)),))


def is_valid_smiles(s: str) -> bool:
    if not isinstance(s, str) or not s:
        return False
    return validate_smiles(s).valid


# Distances

def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance"""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


# Canonical form

def _dense_ranks(keys: Sequence) -> List[int]:
    ordered = sorted(set(keys))
    lookup = {key: rank for rank, key in enumerate(ordered)}
    return [lookup[key] for key in keys]


def _refine(ranks: List[int], adjacency: List[List[Tuple[int, float]]]) -> List[int]:
    classes = len(set(ranks))
    while True:
        refined = _dense_ranks([
            (ranks[i], tuple(sorted((ranks[j], order) for j, order in adjacency[i])))
            for i in range(len(ranks))
        ])
        refined_classes = len(set(refined))
        ranks = refined
        if refined_classes == classes:
            return ranks
        classes = refined_classes


def _tie_candidates(ranks: List[int], adjacency: List[List[Tuple[int, float]]]) -> List[int]:
    """Atoms of the lowest tied class; terminal atoms on one parent are interchangeable"""
    counts: Dict[int, int] = {}
    for r in ranks:
        counts[r] = counts.get(r, 0) + 1
    tied = min(r for r, c in counts.items() if c > 1)
    candidates: List[int] = []
    parents = set()
    for i, r in enumerate(ranks):
        if r != tied:
            continue
        if len(adjacency[i]) == 1:
            parent = adjacency[i][0][0]
            if parent in parents:
                continue
            parents.add(parent)
        candidates.append(i)
    return candidates


def canonical_ranks(g: MolGraph) -> List[int]:
    """
    Morgan-style refinement; remaining ties are broken by trying each member
    of the lowest tied class and keeping the labelling with the smallest
    emitted string. Ranks are a permutation of the atom indices.
    """
    adjacency = g.adjacency()
    n = len(g.atoms)
    invariants = [
        (
            atom.element,
            atom.formal_charge,
            len(adjacency[i]),
            atom.aromatic,
            total_hydrogens(g, i),
        )
        for i, atom in enumerate(g.atoms)
    ]
    best: List[Optional[Tuple[str, List[int]]]] = [None]
    budget = [MAX_TIE_LEAVES]

    def search(ranks: List[int]) -> None:
        if len(set(ranks)) == n:
            budget[0] -= 1
            text = emit(g, ranks)
            if best[0] is None or text < best[0][0]:
                best[0] = (text, ranks)
            return
        for chosen in _tie_candidates(ranks, adjacency):
            if budget[0] <= 0 and best[0] is not None:
                return
            doubled = [2 * r for r in ranks]
            doubled[chosen] -= 1
            search(_refine(_dense_ranks(doubled), adjacency))

    search(_refine(_dense_ranks(invariants), adjacency))
    return best[0][1]


def _atom_text(g: MolGraph, index: int) -> str:
    atom = g.atoms[index]
    symbol = atom.element.lower() if atom.aromatic else atom.element
    hydrogens = total_hydrogens(g, index)
    organic = atom.element in ORGANIC_SUBSET and (not atom.aromatic or symbol in AROMATIC_SUBSET)
    if organic and atom.formal_charge == 0:
        bare = replace(atom, explicit_h=None)
        bare_graph = MolGraph(atoms=g.atoms[:index] + [bare] + g.atoms[index + 1:], bonds=g.bonds)
        if implicit_hydrogens(bare_graph, index) == hydrogens:
            return symbol
    text = "[" + symbol
    if hydrogens:
        text += "H" + (str(hydrogens) if hydrogens > 1 else "")
    if atom.formal_charge:
        sign = "+" if atom.formal_charge > 0 else "-"
        text += sign + (str(abs(atom.formal_charge)) if abs(atom.formal_charge) > 1 else "")
    return text + "]"


def _bond_text(g: MolGraph, a: int, b: int, order: float) -> str:
    if order == AROMATIC:
        return ""
    if order == SINGLE:
        return "-" if g.atoms[a].aromatic and g.atoms[b].aromatic else ""
    return "=" if order == DOUBLE else "#"


def _ring_label(digit: int) -> str:
    return str(digit) if digit < 10 else f"%{digit:02d}"


def emit(g: MolGraph, ranks: Sequence[int]) -> str:
    """Depth-first SMILES writer visiting neighbors in rank order"""
    adjacency = g.adjacency()
    order_of = {}
    for i, neighbors in enumerate(adjacency):
        for j, order in neighbors:
            order_of[(i, j)] = order

    start = min(range(len(g.atoms)), key=lambda i: ranks[i])
    visit_index: Dict[int, int] = {}
    parent: Dict[int, Optional[int]] = {start: None}
    children: Dict[int, List[int]] = {i: [] for i in range(len(g.atoms))}
    ring_partners: Dict[int, List[int]] = {i: [] for i in range(len(g.atoms))}

    def walk(i: int) -> None:
        visit_index[i] = len(visit_index)
        for j, _ in sorted(adjacency[i], key=lambda item: ranks[item[0]]):
            if j == parent[i]:
                continue
            if j in visit_index:
                if j not in ring_partners[i]:
                    ring_partners[i].append(j)
                    ring_partners[j].append(i)
                continue
            parent[j] = i
            children[i].append(j)
            walk(j)

    walk(start)

    out: List[str] = []
    open_rings: Dict[frozenset, int] = {}
    free_digits: List[int] = []
    next_digit = [1]

    def take_digit() -> int:
        if free_digits:
            free_digits.sort()
            return free_digits.pop(0)
        digit = next_digit[0]
        next_digit[0] += 1
        return digit

    def write(i: int) -> None:
        out.append(_atom_text(g, i))
        for j in sorted(ring_partners[i], key=lambda x: visit_index[x]):
            key = frozenset((i, j))
            if key in open_rings:
                digit = open_rings.pop(key)
                out.append(_bond_text(g, i, j, order_of[(i, j)]) + _ring_label(digit))
                free_digits.append(digit)
            else:
                digit = take_digit()
                open_rings[key] = digit
                out.append(_ring_label(digit))
        kids = children[i]
        for position, j in enumerate(kids):
            last = position == len(kids) - 1
            if not last:
                out.append("(")
            out.append(_bond_text(g, i, j, order_of[(i, j)]))
            write(j)
            if not last:
                out.append(")")

    write(start)
    return "".join(out)


def normalize(s: str) -> str:
    """Deterministic canonical re-emission of a valid SMILES string"""
    if not is_valid_smiles(s):
        raise NotValid(f"Cannot normalize invalid SMILES {s!r}")
    g = parse(tokenize(s))
    return emit(g, canonical_ranks(g))


def normalize_or_none(s: str) -> Optional[str]:
    try:
        return normalize(s)
    except SmilesError:
        return None
