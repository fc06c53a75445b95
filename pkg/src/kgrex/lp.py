"""Normal-logic-program data model, text format, classifier, and justifier.

The fragment handled here is exactly what the rule learner emits: ground,
function-free rules over a single image variable X, negation-as-failure, and
stratified abnormality predicates ``abN``. A program is a decision list: the
first target rule whose body is satisfied decides the class.

Text format (one rule per line, ``%`` starts a comment):

    target(X,'bathroom') :- not bed(X), bathtub(X), not ab1(X).
    ab1(X) :- towel(X).

A negated abnormality literal whose predicate has no defining rule succeeds
(closed-world failure).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import ParseError, StratificationError, ValidationError

AB_PATTERN = re.compile(r"^ab([1-9][0-9]*)$")
_IDENT = re.compile(r"[A-Za-z0-9_]+")
_RESERVED_BODY = {"target", "not"}

ABSTAIN = None  # classify() result when no target rule fires


@dataclass(frozen=True)
class Literal:
    predicate: str
    negated: bool = False

    def __post_init__(self):
        if not self.predicate or not _IDENT.fullmatch(self.predicate):
            raise ValidationError(f"invalid predicate name {self.predicate!r}")

    @property
    def ab_id(self) -> Optional[int]:
        m = AB_PATTERN.fullmatch(self.predicate)
        return int(m.group(1)) if m else None

    def render(self) -> str:
        return ("not " if self.negated else "") + f"{self.predicate}(X)"


@dataclass(frozen=True)
class Rule:
    head_class: Optional[str] = None
    head_ab: Optional[int] = None
    body: tuple[Literal, ...] = ()

    def __post_init__(self):
        if (self.head_class is None) == (self.head_ab is None):
            raise ValidationError("a rule has either a target head or an abnormality head")
        if self.head_class is not None and ("'" in self.head_class or "\n" in self.head_class):
            raise ValidationError(f"class name {self.head_class!r} cannot contain quotes or newlines")

    @property
    def is_target(self) -> bool:
        return self.head_class is not None

    def render(self) -> str:
        head = f"target(X,'{self.head_class}')" if self.is_target else f"ab{self.head_ab}(X)"
        if not self.body:
            return head + "."
        return head + " :- " + ", ".join(lit.render() for lit in self.body) + "."


@dataclass
class Program:
    """Ordered rules; target rules form the decision list, abX rules define exceptions."""

    rules: list[Rule] = field(default_factory=list)

    def target_rules(self) -> list[Rule]:
        return [r for r in self.rules if r.is_target]

    def ab_definitions(self) -> dict[int, list[Rule]]:
        defs: dict[int, list[Rule]] = {}
        for r in self.rules:
            if not r.is_target:
                defs.setdefault(r.head_ab, []).append(r)
        return defs

    def class_names(self) -> list[str]:
        seen: list[str] = []
        for r in self.target_rules():
            if r.head_class not in seen:
                seen.append(r.head_class)
        return seen

    def feature_predicates(self) -> list[str]:
        """Body predicates that are not abnormality references, numerically sorted."""
        preds = {lit.predicate for r in self.rules for lit in r.body if lit.ab_id is None}
        return sorted(preds, key=lambda p: (0, int(p)) if p.isdigit() else (1, p))

    def undefined_ab_refs(self) -> list[int]:
        defined = set(self.ab_definitions())
        refs = {lit.ab_id for r in self.rules for lit in r.body if lit.ab_id is not None}
        return sorted(refs - defined)

    def validate(self, require_defined_abs: bool = False) -> None:
        self._check_stratified()
        if require_defined_abs:
            undefined = self.undefined_ab_refs()
            if undefined:
                raise ValidationError(
                    f"abnormality predicates referenced but never defined: {undefined}"
                )

    def _check_stratified(self) -> None:
        defs = self.ab_definitions()
        deps = {
            ab: {lit.ab_id for r in rules for lit in r.body if lit.ab_id is not None}
            for ab, rules in defs.items()
        }
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {ab: WHITE for ab in deps}
        for start in deps:
            if color[start] != WHITE:
                continue
            stack = [(start, iter(sorted(deps[start])))]
            color[start] = GRAY
            while stack:
                node, it = stack[-1]
                advanced = False
                for nxt in it:
                    if nxt not in deps:
                        continue
                    if color[nxt] == GRAY:
                        raise StratificationError(f"abnormality definitions cycle through ab{nxt}")
                    if color[nxt] == WHITE:
                        color[nxt] = GRAY
                        stack.append((nxt, iter(sorted(deps[nxt]))))
                        advanced = True
                        break
                if not advanced:
                    color[node] = BLACK
                    stack.pop()


def serialize(program: Program) -> str:
    """Canonical text, one rule per line; parse(serialize(p)) is the identity."""
    return "".join(rule.render() + "\n" for rule in program.rules)


class _Cursor:
    def __init__(self, text: str, line_no: int):
        self.text = text
        self.line = line_no
        self.pos = 0

    def error(self, message: str):
        raise ParseError(message, self.line, self.pos + 1)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r":
            self.pos += 1

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, token: str):
        if not self.text.startswith(token, self.pos):
            self.error(f"expected {token!r}")
        self.pos += len(token)

    def take_ident(self, what: str) -> str:
        m = _IDENT.match(self.text, self.pos)
        if not m:
            self.error(f"expected {what}")
        self.pos = m.end()
        return m.group(0)

    def take_quoted(self) -> str:
        self.expect("'")
        end = self.text.find("'", self.pos)
        if end < 0:
            self.error("unterminated class name")
        value = self.text[self.pos : end]
        if not value:
            self.error("empty class name")
        self.pos = end + 1
        return value


def _parse_var(c: _Cursor):
    c.skip_ws()
    name = c.take_ident("the variable X")
    if name != "X":
        c.error(f"expected variable X, got {name!r}")
    c.skip_ws()


def _parse_literal(c: _Cursor) -> Literal:
    c.skip_ws()
    ident = c.take_ident("a literal")
    negated = False
    if ident == "not":
        negated = True
        c.skip_ws()
        ident = c.take_ident("a predicate after 'not'")
    if ident in _RESERVED_BODY:
        c.error(f"{ident!r} cannot be used as a body predicate")
    c.expect("(")
    _parse_var(c)
    c.expect(")")
    return Literal(predicate=ident, negated=negated)


def _parse_line(raw: str, line_no: int) -> Optional[Rule]:
    c = _Cursor(raw, line_no)
    c.skip_ws()
    if c.at_end() or c.peek() == "%":
        return None
    ident = c.take_ident("a rule head")
    if ident == "target":
        c.expect("(")
        _parse_var(c)
        c.expect(",")
        c.skip_ws()
        cls = c.take_quoted()
        c.skip_ws()
        c.expect(")")
        head_class, head_ab = cls, None
    elif AB_PATTERN.fullmatch(ident):
        c.expect("(")
        _parse_var(c)
        c.expect(")")
        head_class, head_ab = None, int(AB_PATTERN.fullmatch(ident).group(1))
    else:
        c.error("rule head must be target(X,'class') or abN(X)")
    c.skip_ws()
    body: list[Literal] = []
    if c.peek() != ".":
        c.expect(":-")
        while True:
            body.append(_parse_literal(c))
            c.skip_ws()
            if c.peek() == ",":
                c.expect(",")
                continue
            break
    c.expect(".")
    c.skip_ws()
    if not c.at_end() and c.peek() != "%":
        c.error("unexpected text after the rule")
    return Rule(head_class=head_class, head_ab=head_ab, body=tuple(body))


def parse(text: str, require_defined_abs: bool = False) -> Program:
    """Parse rule-set text; raises ParseError with line/column on bad syntax."""
    rules = []
    for line_no, raw in enumerate(text.split("\n"), start=1):
        rule = _parse_line(raw, line_no)
        if rule is not None:
            rules.append(rule)
    program = Program(rules)
    program.validate(require_defined_abs=require_defined_abs)
    return program


def _fact_bit(facts: Mapping[str, int], predicate: str) -> int:
    try:
        bit = facts[predicate]
    except KeyError:
        raise ValidationError(f"fact set is missing predicate {predicate!r}") from None
    if bit not in (0, 1):
        raise ValidationError(f"fact for {predicate!r} must be 0 or 1, got {bit!r}")
    return int(bit)


def _ab_holds(ab: int, facts, defs, visiting: frozenset) -> bool:
    if ab in visiting:
        raise StratificationError(f"abnormality evaluation cycles through ab{ab}")
    rules = defs.get(ab, ())
    nested = visiting | {ab}
    return any(_body_holds(r.body, facts, defs, nested) for r in rules)


def _body_holds(body: Iterable[Literal], facts, defs, visiting: frozenset = frozenset()) -> bool:
    for lit in body:
        ab = lit.ab_id
        if ab is not None:
            holds = _ab_holds(ab, facts, defs, visiting)
        else:
            holds = _fact_bit(facts, lit.predicate) == 1
        if holds == lit.negated:
            return False
    return True


def classify(facts: Mapping[str, int], program: Program) -> Optional[str]:
    """First satisfied target rule's class, or None when no rule fires."""
    defs = program.ab_definitions()
    for rule in program.rules:
        if rule.is_target and _body_holds(rule.body, facts, defs):
            return rule.head_class
    return ABSTAIN


@dataclass
class JustNode:
    label: str
    kind: str  # "rule" | "literal"
    outcome: bool
    fact: Optional[int] = None
    children: list["JustNode"] = field(default_factory=list)


@dataclass
class JustificationTree:
    """Proof tree for one classification; empty (root None) when nothing fires."""

    root_class: Optional[str]
    root: Optional[JustNode]

    def render_text(self) -> str:
        if self.root is None:
            return "no rule satisfied\n"
        lines: list[str] = []

        def walk(node: JustNode, depth: int):
            if node.kind == "rule":
                status = "satisfied" if node.outcome else "not satisfied"
            else:
                status = "holds" if node.outcome else "fails"
                if node.fact is not None:
                    status += f", fact={node.fact}"
            lines.append("  " * depth + f"{node.label}  [{status}]")
            for child in node.children:
                walk(child, depth + 1)

        walk(self.root, 0)
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        if self.root is None:
            return {"rule": None, "outcome": "none", "children": []}

        def conv(node: JustNode) -> dict:
            out: dict = {}
            if node.kind == "rule":
                out["rule"] = node.label
                out["outcome"] = "satisfied" if node.outcome else "failed"
            else:
                out["literal"] = node.label
                out["outcome"] = "satisfied" if node.outcome else "failed"
                if node.fact is not None:
                    out["fact"] = node.fact
            out["children"] = [conv(c) for c in node.children]
            return out

        return conv(self.root)


def _literal_node(lit: Literal, facts, defs, depth: Optional[int]) -> JustNode:
    ab = lit.ab_id
    if ab is None:
        bit = _fact_bit(facts, lit.predicate)
        outcome = (bit == 1) != lit.negated
        return JustNode(label=lit.render(), kind="literal", outcome=outcome, fact=bit)
    holds = _ab_holds(ab, facts, defs, frozenset())
    outcome = holds != lit.negated
    node = JustNode(label=lit.render(), kind="literal", outcome=outcome)
    if depth is None or depth > 0:
        nested = None if depth is None else depth - 1
        node.children = [_rule_node(r, facts, defs, nested) for r in defs.get(ab, ())]
    return node


def _rule_node(rule: Rule, facts, defs, depth: Optional[int]) -> JustNode:
    children = [_literal_node(lit, facts, defs, depth) for lit in rule.body]
    outcome = _body_holds(rule.body, facts, defs)
    return JustNode(label=rule.render(), kind="rule", outcome=outcome, children=children)


def justify(
    facts: Mapping[str, int],
    program: Program,
    query_class: Optional[str] = None,
    full_depth: bool = False,
) -> JustificationTree:
    """Proof tree for the first satisfied target rule.

    With ``query_class``, only that class's rules are searched. Negated
    abnormality goals expand one sub-level by default; ``full_depth`` expands
    the whole sub-proof.
    """
    defs = program.ab_definitions()
    if query_class is not None:
        candidates = [r for r in program.rules if r.is_target and r.head_class == query_class]
        if not candidates:
            raise ValidationError(f"class {query_class!r} does not appear in the program")
    else:
        candidates = [r for r in program.rules if r.is_target]
    depth = None if full_depth else 1
    for rule in candidates:
        if _body_holds(rule.body, facts, defs):
            return JustificationTree(root_class=rule.head_class, root=_rule_node(rule, facts, defs, depth))
    return JustificationTree(root_class=None, root=None)
