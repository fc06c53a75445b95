"""Rule-set text format, decision-list classification, and justification trees."""

import itertools

import pytest

from kgrex import (
    ParseError,
    Program,
    StratificationError,
    ValidationError,
    classify,
    justify,
    parse,
    serialize,
)
from kgrex.lp import Literal, Rule

from conftest import random_facts, random_program

EXAMPLE_RULE = "target(X,'2') :- not 3(X), 54(X), not ab1(X).\n"


def brute_force_classify(facts, program):
    """Truth-table style re-evaluation, independent of the classifier's recursion."""
    defs = {}
    for r in program.rules:
        if not r.is_target:
            defs.setdefault(r.head_ab, []).append(r)

    def lit_holds(lit):
        ab = lit.ab_id
        if ab is not None:
            value = any(all(lit_holds(l) for l in rule.body) for rule in defs.get(ab, []))
        else:
            value = facts[lit.predicate] == 1
        return (not value) if lit.negated else value

    for rule in program.rules:
        if rule.is_target and all(lit_holds(lit) for lit in rule.body):
            return rule.head_class
    return None


def test_serialize_empty_program():
    assert serialize(Program([])) == ""


def test_example_rule_round_trips_byte_identically():
    program = parse(EXAMPLE_RULE)
    assert serialize(program) == EXAMPLE_RULE


def test_parse_single_rule():
    program = parse("target(X,'a') :- f(X).")
    assert len(program.rules) == 1
    assert program.rules[0].head_class == "a"
    assert program.rules[0].body == (Literal("f", False),)


def test_parse_fact_rule_and_comments():
    text = "% leading comment\ntarget(X,'maj').  % default\n\n"
    program = parse(text)
    assert program.rules == [Rule(head_class="maj", body=())]


def test_parse_whitespace_tolerant_but_canonical_out():
    program = parse("target( X ,  'a' )   :-   not  f(X) ,g(X) .")
    assert serialize(program) == "target(X,'a') :- not f(X), g(X).\n"


def test_parse_error_carries_line_and_column():
    with pytest.raises(ParseError) as exc:
        parse("target(X,'a') :- f(X).\nbroken here")
    assert exc.value.line == 2
    assert exc.value.column >= 1


def test_parse_rejects_target_in_body():
    with pytest.raises(ParseError):
        parse("target(X,'a') :- target(X).")


def test_parse_rejects_bad_variable():
    with pytest.raises(ParseError):
        parse("target(Y,'a') :- f(Y).")


def test_self_recursive_ab_is_stratification_error():
    with pytest.raises(StratificationError):
        parse("ab1(X) :- ab1(X).")


def test_ab_cycle_is_stratification_error():
    with pytest.raises(StratificationError):
        parse("ab1(X) :- ab2(X).\nab2(X) :- not ab1(X).")


def test_undefined_ab_allowed_by_default_but_strict_mode_rejects():
    program = parse(EXAMPLE_RULE)
    assert program.undefined_ab_refs() == [1]
    with pytest.raises(ValidationError):
        parse(EXAMPLE_RULE, require_defined_abs=True)


def test_round_trip_identity_on_random_programs(rng):
    for _ in range(100):
        program = random_program(rng, undefined_ref_rate=0.2)
        text = serialize(program)
        again = parse(text)
        assert again.rules == program.rules
        assert serialize(again) == text


def test_classify_paper_example_facts():
    program = parse(EXAMPLE_RULE)
    assert classify({"3": 0, "54": 1}, program) == "2"


def test_classify_requires_positive_literal():
    program = parse("target(X,'a') :- f(X).")
    assert classify({"f": 0}, program) is None


def test_classify_abstains_then_empty_tree():
    program = parse("target(X,'a') :- f(X).")
    tree = justify({"f": 0}, program)
    assert tree.root_class is None and tree.root is None
    assert "no rule satisfied" in tree.render_text()


def test_classify_matches_brute_force_oracle(rng):
    for _ in range(200):
        program = random_program(rng, undefined_ref_rate=0.15)
        facts = random_facts(rng, program)
        assert classify(facts, program) == brute_force_classify(facts, program)


def test_classify_exception_blocks_rule():
    text = "target(X,'a') :- f(X), not ab1(X).\nab1(X) :- g(X).\n"
    program = parse(text)
    assert classify({"f": 1, "g": 0}, program) == "a"
    assert classify({"f": 1, "g": 1}, program) is None


def test_nested_exceptions_evaluate_goal_directed():
    text = (
        "target(X,'a') :- f(X), not ab1(X).\n"
        "ab1(X) :- g(X), not ab2(X).\n"
        "ab2(X) :- h(X).\n"
    )
    program = parse(text)
    # g holds but ab2 cancels ab1, so the rule fires again
    assert classify({"f": 1, "g": 1, "h": 1}, program) == "a"
    assert classify({"f": 1, "g": 1, "h": 0}, program) is None


def test_decision_list_order_matters():
    r1 = Rule(head_class="a", body=(Literal("p"),))
    r2 = Rule(head_class="b", body=(Literal("q"),))
    facts = {"p": 1, "q": 1}
    assert classify(facts, Program([r1, r2])) == "a"
    assert classify(facts, Program([r2, r1])) == "b"


def test_classify_invariant_under_consistent_renaming(rng):
    for _ in range(50):
        program = random_program(rng)
        facts = random_facts(rng, program)
        mapping = {p: f"renamed_{p}" for p in program.feature_predicates()}
        renamed_rules = []
        for rule in program.rules:
            body = tuple(
                lit if lit.ab_id is not None else Literal(mapping[lit.predicate], lit.negated)
                for lit in rule.body
            )
            renamed_rules.append(Rule(rule.head_class, rule.head_ab, body))
        renamed_facts = {mapping[k]: v for k, v in facts.items()}
        assert classify(renamed_facts, Program(renamed_rules)) == classify(facts, program)


def test_missing_fact_is_an_error():
    program = parse("target(X,'a') :- f(X).")
    with pytest.raises(ValidationError, match="missing predicate"):
        classify({}, program)


def test_justify_root_class_equals_classify(rng):
    for _ in range(200):
        program = random_program(rng, undefined_ref_rate=0.1)
        facts = random_facts(rng, program)
        tree = justify(facts, program)
        assert tree.root_class == classify(facts, program)


def collect_leaf_facts(node, out):
    if node.kind == "literal" and node.fact is not None:
        pred = node.label.removeprefix("not ").removesuffix("(X)")
        out.append((pred, node.fact))
    for child in node.children:
        collect_leaf_facts(child, out)


def test_justify_leaf_facts_match_fact_set(rng):
    for _ in range(100):
        program = random_program(rng)
        facts = random_facts(rng, program)
        tree = justify(facts, program, full_depth=True)
        if tree.root is None:
            continue
        leaves = []
        collect_leaf_facts(tree.root, leaves)
        assert leaves, "satisfied tree should expose at least one fact leaf"
        for pred, bit in leaves:
            assert facts[pred] == bit


def test_justify_kitchen_shape():
    text = (
        "target(X,'kitchen') :- cabinet4_wall5(X), not ab3(X).\n"
        "ab3(X) :- door1(X).\n"
    )
    program = parse(text)
    facts = {"cabinet4_wall5": 1, "door1": 0}
    tree = justify(facts, program)
    assert tree.root_class == "kitchen"
    assert tree.root.kind == "rule"
    labels = [c.label for c in tree.root.children]
    assert labels == ["cabinet4_wall5(X)", "not ab3(X)"]
    # negated exception expands one level into the failed sub-proof
    sub = tree.root.children[1].children
    assert len(sub) == 1 and sub[0].label.startswith("ab3(X)")
    assert sub[0].outcome is False
    rendered = tree.render_text()
    assert rendered.splitlines()[0].startswith("target(X,'kitchen')")
    assert "  cabinet4_wall5(X)" in rendered


def test_justify_query_class():
    text = "target(X,'a') :- p(X).\ntarget(X,'b') :- q(X).\n"
    program = parse(text)
    tree = justify({"p": 1, "q": 1}, program, query_class="b")
    assert tree.root_class == "b"
    with pytest.raises(ValidationError):
        justify({"p": 1, "q": 1}, program, query_class="zzz")


def test_justify_json_shape():
    program = parse(EXAMPLE_RULE)
    tree = justify({"3": 0, "54": 1}, program)
    doc = tree.to_json_dict()
    assert set(doc) == {"rule", "outcome", "children"}
    assert doc["outcome"] == "satisfied"
    kinds = [("literal" in c) for c in doc["children"]]
    assert all(kinds) and len(doc["children"]) == 3
    empty = justify({"3": 1, "54": 1}, program).to_json_dict()
    assert empty == {"rule": None, "outcome": "none", "children": []}


def test_feature_predicates_sorted_numerically():
    program = parse("target(X,'a') :- 10(X), 2(X), zz(X), not ab1(X).")
    assert program.feature_predicates() == ["2", "10", "zz"]


def test_exhaustive_small_program_against_enumeration():
    text = (
        "target(X,'a') :- p(X), not ab1(X).\n"
        "target(X,'b') :- not p(X), q(X).\n"
        "ab1(X) :- q(X), r(X).\n"
    )
    program = parse(text)
    for bits in itertools.product((0, 1), repeat=3):
        facts = dict(zip(("p", "q", "r"), bits))
        assert classify(facts, program) == brute_force_classify(facts, program)
