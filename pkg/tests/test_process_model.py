import random
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from labelrefine.eventlog import EventLog, Trace
from labelrefine.process_model import (
    AcceptingPetriNet,
    FiringError,
    Marking,
    NetFormatError,
    SearchBudgetExceeded,
    accepts,
    discover_dfg,
    enabled,
    export_dot,
    fire,
    format_net,
    language,
    parse_net,
    prefix_closure,
)

EXAMPLE_LANGUAGE = {
    ("A", "B", "D", "E", "F"),
    ("A", "B", "D", "F", "E"),
    ("A", "C", "D", "E", "F"),
    ("A", "C", "D", "F", "E"),
}


# ---------------------------------------------------------------- oracles


def brute_force_language(net, max_len):
    """Every firing sequence by plain recursion; only valid for nets whose
    firing sequences are all finite."""
    words = set()

    def walk(m, word):
        if len(word) > max_len:
            return
        if m in net.finals:
            words.add(word)
        for t, pre in net.preset.items():
            if all(m[p] >= 1 for p in pre):
                tokens = dict(m)
                for p in pre:
                    tokens[p] -= 1
                for p in net.postset[t]:
                    tokens[p] = tokens.get(p, 0) + 1
                lab = net.transitions[t]
                walk(Marking(tokens), word if lab is None else word + (lab,))

    walk(net.initial, ())
    return words


def random_acyclic_net(rng: random.Random):
    """Places are ordered; every transition moves tokens from lower to
    higher places, so all firing sequences terminate."""
    n_places = rng.randint(3, 7)
    places = [f"p{i}" for i in range(n_places)]
    transitions, arcs = {}, set()
    for j in range(rng.randint(1, 8)):
        cut = rng.randint(1, n_places - 1)
        pre = rng.sample(places[:cut], rng.randint(1, min(2, cut)))
        post = rng.sample(places[cut:], rng.randint(0, min(2, n_places - cut)))
        t = f"t{j}"
        transitions[t] = None if rng.random() < 0.25 else rng.choice("abc")
        arcs |= {(p, t) for p in pre} | {(t, p) for p in post}
    initial = Marking(rng.sample(places[:2], rng.randint(1, 2)))
    net = AcceptingPetriNet(frozenset(places), transitions, frozenset(arcs), initial, (initial,))
    # pick reachable final markings by random maximal runs
    finals = set()
    for _ in range(2):
        m = initial
        while True:
            en = sorted(enabled(net, m))
            if not en or rng.random() < 0.15:
                break
            m = fire(net, m, rng.choice(en))
        finals.add(m)
    return AcceptingPetriNet(frozenset(places), transitions, frozenset(arcs), initial, tuple(finals))


# ---------------------------------------------------------------- example net


def test_example_firing(example_net):
    m = example_net.initial
    assert m == Marking(["p1"])
    assert enabled(example_net, m) == {"t1"}
    assert fire(example_net, m, "t1") == Marking(["p2"])
    assert fire(example_net, Marking(["p3"]), "t4") == Marking(["p4", "p5"])
    assert enabled(example_net, Marking(["p2"])) == {"t2", "t3"}
    with pytest.raises(FiringError):
        fire(example_net, m, "t4")
    with pytest.raises(FiringError):
        fire(example_net, m, "nope")


def test_example_accepts(example_net):
    assert accepts(example_net, "ABDEF")
    assert accepts(example_net, "ACDFE")
    assert not accepts(example_net, "AB")
    assert not accepts(example_net, "ABCDEF")
    assert not accepts(example_net, "")


def test_example_language(example_net):
    res = language(example_net, 5)
    assert res.complete
    assert set(res.words) == EXAMPLE_LANGUAGE
    assert language(example_net, 4).words == frozenset()
    assert set(language(example_net, 20).words) == EXAMPLE_LANGUAGE


def test_example_prefix_closure(example_net):
    closure = prefix_closure(language(example_net, 5).words)
    # (), A, AB, AC, ABD, ACD, ABDE, ABDF, ACDE, ACDF and the 4 full words
    assert len(closure) == 14
    assert len(closure - {()}) == 13
    assert EXAMPLE_LANGUAGE <= closure


def test_example_dot(example_net):
    dot = export_dot(example_net)
    assert dot.startswith('digraph "example" {') and dot.rstrip().endswith("}")
    assert len(re.findall(r"shape=circle", dot)) == 8
    assert len(re.findall(r"shape=box", dot)) == 7
    assert dot.count("->") == 16
    assert dot.count("fillcolor=lightgray") == 1
    assert export_dot(example_net) == dot


def test_net_format_roundtrip(example_net):
    again = parse_net(format_net(example_net), name="example")
    assert again == example_net


def test_net_format_errors():
    with pytest.raises(NetFormatError, match="line 2"):
        parse_net("place p\nbogus x\n")
    with pytest.raises(NetFormatError, match="final"):
        parse_net("place p\ninitial p\n")
    with pytest.raises(NetFormatError):
        parse_net("place p\ntransition t a\narc p p\ninitial p\nfinal p\n")


def test_multiplicity_in_markings():
    net = parse_net("place p q\ntransition t x\narc p t\narc t q\ninitial p:2\nfinal q:2\n")
    assert net.initial["p"] == 2
    assert set(language(net, 3).words) == {("x", "x")}


# ---------------------------------------------------------------- small cases


def test_single_transition_net():
    net = parse_net("place i o\ntransition t X\narc i t\narc t o\ninitial i\nfinal o\n")
    assert set(language(net, 3).words) == {("X",)}


def test_self_loop_leaves_marking():
    net = parse_net("place p\ntransition t a\narc p t\narc t p\ninitial p\nfinal p\n")
    assert fire(net, net.initial, "t") == net.initial
    assert set(language(net, 3).words) == {(), ("a",), ("a", "a"), ("a", "a", "a")}


def test_unbounded_net_fails_loudly():
    # t produces two tokens from one: the marking grows without bound
    net = parse_net("place p q\ntransition t a\ntransition u tau\narc p t\narc t p\narc t q\narc q u\narc u q\n"
                    "initial p\nfinal q\n")
    assert not language(net, 40).complete
    net2 = parse_net("place p q\ntransition g tau\narc p g\narc g p\narc g q\ninitial p\nfinal q\n")
    with pytest.raises(SearchBudgetExceeded):
        accepts(net2, ["z"])


def test_prefix_closure_small():
    assert prefix_closure([("A", "B")]) == {(), ("A",), ("A", "B")}
    assert prefix_closure([]) == set()


@given(st.sets(st.lists(st.sampled_from("ab"), max_size=4).map(tuple), max_size=6),
       st.sets(st.lists(st.sampled_from("ab"), max_size=4).map(tuple), max_size=6))
def test_prefix_closure_laws(a, b):
    ca = prefix_closure(a)
    assert a <= ca
    assert prefix_closure(ca) == ca
    assert prefix_closure(a) <= prefix_closure(a | b)


# ---------------------------------------------------------------- randomised


def test_language_matches_brute_force_100_nets():
    rng = random.Random(20170104)
    for _ in range(100):
        net = random_acyclic_net(rng)
        res = language(net, 8)
        assert res.complete
        assert set(res.words) == brute_force_language(net, 8), format_net(net)


def test_accepts_agrees_with_language():
    rng = random.Random(5)
    for _ in range(40):
        net = random_acyclic_net(rng)
        lang = language(net, 4).words
        for n in range(5):
            for w in {tuple(rng.choice("abc") for _ in range(n)) for _ in range(6)} | set(lang):
                if len(w) <= 4:
                    assert accepts(net, w) == (w in lang)


def check_token_conservation(net, steps, rng):
    m = net.initial
    for _ in range(steps):
        en = sorted(enabled(net, m))
        if not en:
            m = net.initial
            continue
        t = rng.choice(en)
        m2 = fire(net, m, t)
        for p in net.places:
            assert m2[p] == m[p] - (p in net.preset[t]) + (p in net.postset[t])
        # enabled means every input place is marked
        for u in net.transitions:
            assert (u in enabled(net, m2)) == all(m2[p] >= 1 for p in net.preset[u])
        m = m2


def test_token_conservation_10k_steps(example_net):
    rng = random.Random(99)
    check_token_conservation(example_net, 5000, rng)
    nets = [random_acyclic_net(rng) for _ in range(50)]
    for net in nets:
        check_token_conservation(net, 100, rng)


# ---------------------------------------------------------------- DFG


def _log(*words):
    from datetime import datetime, timedelta

    from labelrefine.eventlog import Event

    traces, i = [], 0
    for c, w in enumerate(words):
        evs = []
        for j, a in enumerate(w):
            i += 1
            evs.append(Event(i, datetime(2015, 1, 1 + c) + timedelta(minutes=j), a, a))
        traces.append(Trace(c, tuple(evs)))
    return EventLog(tuple(traces))


def test_dfg_counts():
    dfg = discover_dfg(_log("ab", "ab"))
    assert dfg.edges == {("a", "b"): 2}
    assert dfg.start == {"a": 2} and dfg.end == {"b": 2}


def test_dfg_single_events_have_no_edges():
    assert discover_dfg(_log("a", "b", "a")).edges == {}


def test_dfg_total_weight():
    words = ["abcab", "ba", "c", "aaab"]
    dfg = discover_dfg(_log(*words))
    assert sum(dfg.edges.values()) == sum(len(w) - 1 for w in words)


def test_dfg_dot():
    dot = export_dot(discover_dfg(_log("ab", "ab")))
    assert '"a" -> "b" [label="2"]' in dot
    assert export_dot(discover_dfg(_log())) == 'digraph "dfg" {\n  rankdir=LR;\n}\n'
