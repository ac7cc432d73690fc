import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from statewalk.dom import parse_markup
from statewalk.errors import UnparseableMarkup
from statewalk.simapp import SimDriver, initial_session, render, step
from statewalk.state import (Action, ActionType, FingerprintConfig, Observation, diff, fingerprint,
                             normalize_dom, normalize_url_path, with_metadata)

from _support import obs, ref_fingerprint_digest


def test_normalize_strips_text():
    assert normalize_dom('<div id="a"><p>hello</p></div>') == "div#a>p"


def test_volatile_style_ignored():
    assert normalize_dom('<div style="x"></div>') == normalize_dom('<div style="y"></div>')


def test_script_bodies_and_nonces_stripped():
    a = normalize_dom('<div nonce="1"><script>var t = 1;</script></div>')
    b = normalize_dom('<div nonce="2"><script>var t = 2; alert(t)</script></div>')
    assert a == b


def test_structural_attributes_kept_in_order():
    sig = normalize_dom('<form action="/x" id="f"><input name="q" type="text" class="big"></form>')
    assert sig == "form#f[action=/x]>input[name=q][type=text]"


def test_unclosed_tags_tolerated():
    assert normalize_dom("<ul><li>a<li>b</ul>").startswith("ul")


@pytest.mark.parametrize("bad", ["", "   ", "just text", "\x00\x01\x02"])
def test_unparseable(bad):
    with pytest.raises(UnparseableMarkup):
        normalize_dom(bad)


def test_fingerprint_propagates_parse_error():
    with pytest.raises(UnparseableMarkup):
        fingerprint(Observation("no tags here", {"url": "http://x/"}))


def test_observation_requires_url():
    with pytest.raises(ValueError):
        Observation("<p></p>", {"status": "200"})


def test_home_signature_stable_across_dynamic_text(shop):
    # the results page interpolates the query into its title text
    s = initial_session(shop)
    a = step(shop, step(shop, s, "nav:http://shop.sim/"), "key:q", {"text": "forceps"})
    b = step(shop, step(shop, s, "nav:http://shop.sim/"), "key:q", {"text": "mirror"})
    ra, rb = render(shop, a), render(shop, b)
    assert ra.page_source != rb.page_source
    assert normalize_dom(ra.page_source) == normalize_dom(rb.page_source)


def test_digest_matches_independent_framing():
    o = obs('<a href="/b">b</a>', status="200", cookies="auth")
    f = fingerprint(o)
    assert f.metadata_keys == ("cookies", "status")
    assert f.digest == ref_fingerprint_digest(f.url_path, f.dom_signature, [("cookies", "auth"), ("status", "200")])
    assert len(f.digest) == 64


def test_fingerprint_frozen_value():
    # frozen from the independent framing above; guards against encoding drift
    f = fingerprint(Observation("<html><body><p>x</p></body></html>", {"url": "http://a/"}))
    assert f.dom_signature == "html>body>p"
    assert f.digest == ref_fingerprint_digest("/", "html>body>p", [])


def test_fingerprint_stable_across_processes():
    code = ("from statewalk.state import Observation, fingerprint;"
            "print(fingerprint(Observation('<div id=\"a\"><a href=\"/x\">y</a></div>', {'url': 'http://h/p'})).digest)")
    out = {subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
           for _ in range(2)}
    local = fingerprint(Observation('<div id="a"><a href="/x">y</a></div>', {"url": "http://h/p"})).digest
    assert out == {local + "\n"}


def test_same_url_cart_states_differ(shop):
    d = SimDriver(shop)
    d.navigate("http://shop.sim/product/1")
    o1 = d.observe()
    d2 = SimDriver(shop)
    d2.navigate("http://shop.sim/product/2")
    o2 = d2.observe()
    doc1 = parse_markup(o1.page_source)
    add = Action(ActionType.CLICK, doc1.selector_for(doc1.find_all("button")[0]), (), None, "add")
    d.perform(add)
    doc2 = parse_markup(o2.page_source)
    d2.perform(Action(ActionType.CLICK, doc2.selector_for(doc2.find_all("button")[0]), (), None, "add"))
    c1, c2 = d.observe(), d2.observe()
    assert c1.url == c2.url == "http://shop.sim/cart"
    assert fingerprint(c1).digest != fingerprint(c2).digest


def test_session_token_rotation_ignored(shop):
    s = initial_session(shop)
    a = render(shop, s)
    b = render(shop, s.__class__(s.state, s.vars, s.counter, s.flake_cursor, s.resets + 1))
    assert a.metadata["session_token"] != b.metadata["session_token"]
    assert fingerprint(a) == fingerprint(b)


def test_included_metadata_key_matters():
    o = obs("<p></p>")
    assert fingerprint(o) != fingerprint(with_metadata(o, status="500"))
    assert fingerprint(o) == fingerprint(with_metadata(o, session_token="zzz"))
    cfg = FingerprintConfig(metadata_include_keys=())
    assert fingerprint(o, cfg) == fingerprint(with_metadata(o, status="500"), cfg)


def test_query_params():
    assert normalize_url_path("http://a/s?b=2&a=1") == "/s?a=1&b=2"
    assert normalize_url_path("http://a/s?b=2", ignore_query_params=True) == "/s"
    assert normalize_url_path("http://a/s/") == "/s"
    assert normalize_url_path("http://a") == "/"


def test_config_from_mapping():
    cfg = FingerprintConfig.from_mapping({"metadata_include_keys": "status", "ignore_query_params": "yes",
                                          "volatile_attributes": "style, href"})
    assert cfg.metadata_include_keys == ("status",)
    assert cfg.ignore_query_params
    assert normalize_dom('<a href="/1"></a>', cfg) == normalize_dom('<a href="/2"></a>', cfg)


def test_diff_identity():
    o = obs("<p>x</p>")
    d = diff(o, o)
    assert not d.changed and d.dom_distance == 0 and not d.url_changed


def test_diff_home_vs_results(shop):
    d = SimDriver(shop)
    home = d.observe()
    doc = parse_markup(home.page_source)
    box = doc.find_all("input")[0]
    d.perform(Action(ActionType.KEY_INPUT, doc.selector_for(box), (), (("key", "Enter"), ("text", "forceps")), "s"))
    res = diff(home, d.observe())
    assert res.changed and res.url_changed and res.dom_distance > 0


def test_diff_noop_event_unchanged(shop):
    d = SimDriver(shop)
    d.navigate("http://shop.sim/product/1")
    before = d.observe()
    doc = parse_markup(before.page_source)
    zoom = next(e for e in doc.elements if e.get("id") == "zoom-1")
    d.perform(Action(ActionType.SCRIPT_EVENT, doc.selector_for(zoom), (), "contextmenu", "right-click"))
    assert not diff(before, d.observe()).changed


# -- properties ---------------------------------------------------------------------

_tags = st.sampled_from(["div", "span", "p", "section", "ul", "li"])
_text = st.text(alphabet="abc xyz", max_size=8)


@st.composite
def pages(draw):
    n = draw(st.integers(1, 6))
    parts = []
    for i in range(n):
        tag = draw(_tags)
        parts.append(f'<{tag} id="e{i}" style="{draw(_text)}">{draw(_text)}</{tag}>')
    return parts


@given(pages(), _text)
def test_determinism_and_ignorability(parts, noise):
    a = obs("".join(parts))
    for _ in range(3):
        assert fingerprint(a) == fingerprint(a)
    perturbed = [p.replace(">", f">{noise}", 1) for p in parts]
    b = obs("".join(perturbed).replace('style="', 'style="q'), session_token=noise)
    assert fingerprint(a).digest == fingerprint(b).digest


@given(pages(), st.integers(0, 5), st.sampled_from(['<a href="/n">n</a>', "<button>b</button>",
                                                    '<form id="ff"></form>']))
def test_sensitivity_to_interactive_elements(parts, pos, extra):
    pos = min(pos, len(parts))
    a = obs("".join(parts))
    b = obs("".join(parts[:pos] + [extra] + parts[pos:]))
    assert fingerprint(a).digest != fingerprint(b).digest
    assert diff(a, b).changed and diff(a, b).dom_distance >= 1


@given(pages(), pages())
def test_diff_changed_is_symmetric(p, q):
    a, b = obs("".join(p)), obs("".join(q))
    assert diff(a, b).changed == diff(b, a).changed
    assert diff(a, b).dom_distance == diff(b, a).dom_distance


def test_fingerprint_repeat_100():
    o = obs('<form id="f"><input name="a"></form>')
    assert len({fingerprint(o).digest for _ in range(100)}) == 1
