import pytest
from hypothesis import given, settings, strategies as st

from morph.lts import (RECONFIGURE, EmptyGuard, Lts, LtsError, LtsParseError, ModeSwitchSpec,
                       PartitionClash, canonical, compose, dump_lts, mode_switch_compose,
                       parse_lts, untag)

UNIT = Lts(["u"], "u", [], [], [])


def chain():
    return Lts(["a", "b", "c"], "a", ["go", "ev"], ["go"], [("a", "go", "b"), ("b", "ev", "c")])


def test_nondeterminism_rejected():
    with pytest.raises(LtsError):
        Lts(["a", "b"], "a", ["x"], ["x"], [("a", "x", "a"), ("a", "x", "b")])


def test_unknown_state_rejected():
    with pytest.raises(LtsError):
        Lts(["a"], "a", ["x"], [], [("a", "x", "zz")])


def test_compose_with_unit_is_identity():
    m = chain()
    assert canonical(compose(m, UNIT)) == canonical(m)
    assert canonical(compose(UNIT, m)) == canonical(m)


def test_two_state_product_matches_hand_enumeration():
    a = Lts([0, 1], 0, ["x", "p"], ["x"], [(0, "x", 1), (1, "p", 0)])
    b = Lts([0, 1], 0, ["x", "q"], ["x"], [(0, "q", 1), (1, "x", 0)])
    prod = compose(a, b)
    expected = {
        ((0, 0), "q", (0, 1)),
        ((0, 1), "x", (1, 0)),
        ((1, 0), "p", (0, 0)),
        ((1, 0), "q", (1, 1)),
        ((1, 1), "p", (0, 1)),
    }
    assert set(prod.transitions()) == expected
    assert len(prod.states) <= 4


def test_partition_clash():
    a = Lts([0], 0, ["goto"], ["goto"], [])
    b = Lts([0], 0, ["goto"], [], [])
    with pytest.raises(PartitionClash):
        compose(a, b)


def arm():
    return Lts(["flying", "landed", "arm_folded"], "flying", ["land", "fold_arm"], ["land", "fold_arm"],
               [("flying", "land", "landed"), ("landed", "fold_arm", "arm_folded")])


def test_mode_switch_only_from_guard_states():
    post = Lts(["cam"], "cam", ["analyse"], ["analyse"], [("cam", "analyse", "cam")])
    m = mode_switch_compose(ModeSwitchSpec(arm(), post, lambda s: s == "arm_folded"))
    switches = [(s, t) for s, l, t in m.transitions() if l == RECONFIGURE]
    assert switches == [(("pre", "arm_folded"), ("post", "cam"))]
    assert RECONFIGURE in m.controllable


def test_mode_switch_empty_guard():
    with pytest.raises(EmptyGuard):
        mode_switch_compose(ModeSwitchSpec(arm(), arm(), lambda s: False))


def test_mode_switch_label_clash():
    bad = Lts([0], 0, [RECONFIGURE], [RECONFIGURE], [])
    with pytest.raises(LtsError):
        mode_switch_compose(ModeSwitchSpec(bad, arm(), lambda s: True))


def test_mode_switch_same_model_doubles_states():
    m = arm()
    sw = mode_switch_compose(ModeSwitchSpec(m, m, lambda s: True))
    assert len(sw.states) == 2 * len(m.states)
    assert sum(1 for _, l, _ in sw.transitions() if l == RECONFIGURE) == len(m.states)


def test_untag():
    assert untag(("post", ("pre", "x"))) == "x"
    assert untag("y") == "y"


def test_text_round_trip():
    m = chain()
    assert dump_lts(parse_lts(dump_lts(m))) == dump_lts(m)


def test_parse_errors():
    with pytest.raises(LtsParseError):
        parse_lts("state a\n")
    with pytest.raises(LtsParseError):
        parse_lts("state a\ninit a\nctrl x\nunctrl x\n")
    with pytest.raises(LtsParseError):
        parse_lts("state a\ninit a\nbogus\n")


# -- properties --------------------------------------------------------------

LABELS = ["a", "b", "c", "x", "y"]
CTRL = {"a", "b", "x"}  # one fixed partition keeps random operands compatible


@st.composite
def small_lts(draw):
    n = draw(st.integers(1, 4))
    alpha = draw(st.lists(st.sampled_from(LABELS), min_size=0, max_size=4, unique=True))
    trans = []
    for s in range(n):
        for l in alpha:
            if draw(st.booleans()):
                trans.append((s, l, draw(st.integers(0, n - 1))))
    return Lts(range(n), 0, alpha, [l for l in alpha if l in CTRL], trans)


def _deterministic(m):
    return all(len(out) == len(set(out)) for out in m.succ.values())


@settings(max_examples=200, deadline=None)
@given(small_lts(), small_lts())
def test_compose_commutative(a, b):
    ab, ba = compose(a, b), compose(b, a)
    swapped = Lts([(y, x) for x, y in ba.states], (ba.initial[1], ba.initial[0]), ba.alphabet,
                  ba.controllable, [((s[1], s[0]), l, (t[1], t[0])) for s, l, t in ba.transitions()])
    assert canonical(ab) == canonical(swapped)


@settings(max_examples=200, deadline=None)
@given(small_lts(), small_lts(), small_lts())
def test_compose_associative(a, b, c):
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))

    def flat(s):
        return (s[0][0], s[0][1], s[1]) if isinstance(s[0], tuple) else (s[0], s[1][0], s[1][1])

    def relabel(m):
        return Lts([flat(s) for s in m.states], flat(m.initial), m.alphabet, m.controllable,
                   [(flat(s), l, flat(t)) for s, l, t in m.transitions()])

    assert canonical(relabel(left)) == canonical(relabel(right))
    assert _deterministic(left)


@settings(max_examples=200, deadline=None)
@given(small_lts(), small_lts(), st.data())
def test_mode_switch_leaves_post_untouched(pre, post, data):
    guard_states = data.draw(st.sets(st.sampled_from(sorted(pre.states))))
    if not guard_states:
        return
    m = mode_switch_compose(ModeSwitchSpec(pre, post, guard_states.__contains__))
    post_out = {(untag(s), l, untag(t)) for s, l, t in m.transitions() if s[0] == "post"}
    assert post_out == set(post.transitions())
    switches = {untag(s) for s, l, _ in m.transitions() if l == RECONFIGURE}
    assert switches == guard_states


def test_mode_switch_post_entry_map():
    pre = Lts(["a", "b"], "a", ["x"], ["x"], [("a", "x", "b")])
    post = Lts(["A", "B"], "A", ["y"], ["y"], [("A", "y", "B")])
    m = mode_switch_compose(ModeSwitchSpec(pre, post, lambda s: True, post_entry=str.upper))
    switches = sorted((s, t) for s, l, t in m.transitions() if l == RECONFIGURE)
    assert switches == [(("pre", "a"), ("post", "A")), (("pre", "b"), ("post", "B"))]
    with pytest.raises(LtsError):
        mode_switch_compose(ModeSwitchSpec(pre, post, lambda s: True, post_entry=lambda s: "zz"))
