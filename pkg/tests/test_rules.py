import random
import string

import pytest

from socengine.rules import (
    DetectionRule,
    ExtractionError,
    HarnessResult,
    KEYWORD_WHITELIST,
    RuleFormat,
    SidCounter,
    adapt_snort2,
    adapt_suricata6,
    adapt_yara,
    parse_ids_rule,
    parse_yara_rule,
    postprocess,
    split_options,
    test_harness as engine_harness,
    validate,
)

# The golden corpus: one structurally canonical rule per supported dialect.
GOLDEN_SURICATA = (
    'alert dns $HOME_NET any -> any 53 (msg:"SOC - DNS tunnelling - excessively long '
    'subdomain label"; dns.query; content:"."; pcre:"/^[^.]{50,}\\./"; '
    "threshold:type both, track by_src, count 10, seconds 60; "
    "classtype:attempted-recon; sid:2025001; rev:1;)"
)
GOLDEN_SNORT2 = (
    'alert tcp $EXTERNAL_NET any -> $HOME_NET 22 (msg:"SOC - SSH brute-force - multiple '
    'failed auth attempts"; flow:to_server,established; content:"SSH-"; depth:4; '
    "detection_filter:track by_src, count 5, seconds 60; classtype:attempted-user; "
    "sid:2025010; rev:1;)"
)
GOLDEN_SNORT3 = (
    'alert http $HOME_NET any -> $EXTERNAL_NET 443 (msg:"SOC - beacon C2 callback"; '
    'flow:to_server,established; http_uri; content:"/visit.js"; http_header; '
    'content:"Cookie"; pcre:"/Cookie:\\s*[A-Za-z0-9+\\/=]{20,}/"; '
    "classtype:trojan-activity; sid:2025020; rev:1;)"
)
GOLDEN_YARA = """rule php_webshell_generic {
    meta:
        description = "Detects common PHP webshells"
        author = "SOC Rule Generator"
        severity = "high"
    strings:
        $f1 = "eval(base64_decode(" ascii nocase
        $f2 = "system(" ascii nocase
        $f3 = "passthru(" ascii nocase
        $f4 = "shell_exec(" ascii nocase
        $v1 = "$_POST[" ascii nocase
        $v2 = "$_REQUEST[" ascii nocase
    condition:
        any of ($f*) and any of ($v*)
}"""

GOLDEN = [
    (GOLDEN_SURICATA, RuleFormat.SURICATA),
    (GOLDEN_SNORT2, RuleFormat.SNORT2),
    (GOLDEN_SNORT3, RuleFormat.SNORT3),
    (GOLDEN_YARA, RuleFormat.YARA),
]


class TestOptionSplitting:
    def test_quoted_semicolons_preserved(self):
        options = split_options('msg:"a;b"; content:"x"; sid:1;')
        assert options[0] == ("msg", '"a;b"')
        assert len(options) == 3

    def test_bare_options(self):
        options = split_options('dns.query; content:"."; nocase;')
        assert options[0] == ("dns.query", None)
        assert options[2] == ("nocase", None)

    def test_escaped_quote_inside_content(self):
        options = split_options(r'content:"say \"hi\"; bye"; sid:5;')
        assert len(options) == 2

    def test_value_keeps_inner_colons(self):
        options = split_options("threshold:type both, track by_src, count 10, seconds 60;")
        assert options[0][0] == "threshold"
        assert "track by_src" in options[0][1]


class TestPostprocess:
    def test_fence_and_preamble_stripped(self):
        raw = ("Sure! Here is the rule you requested:\n```suricata\n"
               + GOLDEN_SURICATA + "\n```\nHope that helps.")
        rule = postprocess(raw, "suricata")
        assert rule.text.startswith("alert dns")
        assert "```" not in rule.text

    def test_missing_sid_injected_above_million(self):
        counter = SidCounter()
        rule = postprocess('alert tcp any any -> any 80 (msg:"x"; content:"y";)',
                           "snort2", sid_counter=counter)
        sid = int(rule.option("sid"))
        assert sid > 1_000_000
        assert rule.option("rev") == "1"

    def test_sid_counter_monotone(self):
        counter = SidCounter()
        first = postprocess('alert tcp any any -> any 80 (msg:"a";)', "snort2",
                            sid_counter=counter)
        second = postprocess('alert tcp any any -> any 81 (msg:"b";)', "snort2",
                             sid_counter=counter)
        assert int(second.option("sid")) == int(first.option("sid")) + 1

    def test_sid_counter_persists(self, tmp_path):
        path = tmp_path / "sid.json"
        first = SidCounter(path)
        a = first.take()
        second = SidCounter(path)
        assert second.take() == a + 1

    def test_unclosed_paren_repaired(self):
        rule = postprocess('alert tcp any any -> any 80 (msg:"x"; content:"(";',
                           "snort2")
        assert rule.text.count("(") - rule.text.count('"(') == rule.text.count(")")
        assert validate(rule).valid or not rule.has_option("sid")

    def test_clean_rule_unchanged(self):
        rule = postprocess(GOLDEN_SURICATA, "suricata")
        assert rule.text == GOLDEN_SURICATA

    def test_idempotent_on_goldens(self):
        for text, fmt in GOLDEN:
            counter = SidCounter()
            once = postprocess(text, fmt, sid_counter=counter)
            twice = postprocess(once.text, fmt, sid_counter=counter)
            assert twice.text == once.text

    def test_no_rule_content_raises(self):
        with pytest.raises(ExtractionError):
            postprocess("I am sorry, I cannot help with that.", "suricata")
        with pytest.raises(ExtractionError):
            postprocess("just prose", "yara")

    def test_yara_brace_balanced(self):
        broken = GOLDEN_YARA.rstrip().rstrip("}")
        rule = postprocess(broken, "yara")
        assert rule.text.count("{") <= rule.text.count("}") + rule.text.count('"{"')
        assert validate(rule).valid

    def test_multiline_ids_rule_joined(self):
        raw = 'alert tcp any any -> any 80 (\n  msg:"multi";\n  sid:2000001;\n  rev:1;\n)'
        rule = postprocess(raw, "snort2")
        assert "\n" not in rule.text

    def test_trailing_prose_dropped(self):
        raw = GOLDEN_SNORT2 + "\nThis rule detects brute force."
        rule = postprocess(raw, "snort2")
        assert rule.text == GOLDEN_SNORT2

    def _fuzz_corpus(self, n=1000):
        rng = random.Random(1234)
        fragments = [
            GOLDEN_SURICATA, GOLDEN_SNORT2,
            "```\n", "```suricata\n", "Here is your rule:\n",
            'alert udp any any -> any 53 (msg:"f";', "(((", ")",
            'alert tcp any 80 <> any any (content:"x"; sid:7;)',
            "random prose without any rule tokens",
            'msg:"dangling option";',
        ]
        corpus = []
        for _ in range(n):
            parts = rng.sample(fragments, rng.randint(1, 4))
            corpus.append("\n".join(parts))
        return corpus

    def test_idempotence_fuzz_corpus(self):
        counter = SidCounter()
        for sample in self._fuzz_corpus(1000):
            try:
                once = postprocess(sample, "suricata", sid_counter=counter)
            except ExtractionError:
                continue
            twice = postprocess(once.text, "suricata", sid_counter=counter)
            assert twice.text == once.text


class TestValidate:
    def test_golden_corpus_validates(self):
        for text, fmt in GOLDEN:
            rule = postprocess(text, fmt)
            report = validate(rule)
            assert report.valid, (fmt, [f.to_dict() for f in report.findings])

    def test_missing_sid_is_error(self):
        rule = parse_ids_rule(
            'alert dns $HOME_NET any -> any 53 (msg:"x"; dns.query; rev:1;)',
            RuleFormat.SURICATA)
        report = validate(rule)
        assert not report.valid
        assert any("sid" in f.message for f in report.errors())

    def test_unknown_keyword_error_for_snort2(self):
        rule = parse_ids_rule(
            'alert tcp any any -> any 80 (msg:"x"; notakeyword:1; sid:1000001; rev:1;)',
            RuleFormat.SNORT2)
        report = validate(rule)
        assert not report.valid

    def test_unknown_keyword_warning_for_suricata(self):
        rule = parse_ids_rule(
            'alert tcp any any -> any 80 (msg:"x"; notakeyword:1; sid:1000001; rev:1;)',
            RuleFormat.SURICATA)
        report = validate(rule)
        assert report.valid
        assert any(f.severity == "warning" for f in report.findings)

    def test_yara_missing_condition_is_error(self):
        rule = parse_yara_rule('rule broken {\n strings:\n $a = "x"\n}')
        report = validate(rule)
        assert not report.valid
        assert any("condition" in f.message for f in report.errors())

    def test_bad_port_is_error(self):
        rule = parse_ids_rule(
            'alert tcp any any -> any 99999 (msg:"x"; sid:1000001;)',
            RuleFormat.SNORT2)
        assert not validate(rule).valid

    def test_never_crashes_on_arbitrary_bytes(self):
        rng = random.Random(99)
        alphabet = string.printable
        for _ in range(500):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 200)))
            rule = DetectionRule(format=RuleFormat.SNORT2, text=text)
            report = validate(rule)
            assert isinstance(report.valid, bool)
            yara_rule = DetectionRule(format=RuleFormat.YARA, text=text)
            assert isinstance(validate(yara_rule).valid, bool)

    def test_whitelist_census(self):
        assert len(KEYWORD_WHITELIST) == 130

    def test_goldens_only_use_whitelisted_keywords(self):
        for text, fmt in GOLDEN[:3]:
            rule = parse_ids_rule(text, fmt)
            for key, _ in rule.options:
                assert key in KEYWORD_WHITELIST, key


class TestRoundTrip:
    def test_parse_render_parse_stable(self):
        for text, fmt in GOLDEN[:3]:
            rule = parse_ids_rule(text, fmt)
            reparsed = parse_ids_rule(rule.render(), fmt)
            assert reparsed.header == rule.header
            assert reparsed.options == rule.options


class TestAdaptSnort2:
    def test_dns_maps_to_udp(self):
        rule = parse_ids_rule(GOLDEN_SURICATA, RuleFormat.SURICATA)
        adapted, findings = adapt_snort2(rule)
        assert adapted.text.startswith("alert udp")
        assert adapted.format is RuleFormat.SNORT2

    def test_dns_query_stripped_with_warning(self):
        rule = parse_ids_rule(GOLDEN_SURICATA, RuleFormat.SURICATA)
        adapted, findings = adapt_snort2(rule)
        assert not adapted.has_option("dns.query")
        assert any("dns.query" in f.message and f.severity == "warning"
                   for f in findings)

    def test_http_uri_sticky_becomes_modifier(self):
        rule = parse_ids_rule(
            'alert http any any -> any 80 (msg:"x"; http.uri; content:"/a"; '
            "sid:1000001; rev:1;)",
            RuleFormat.SURICATA)
        adapted, _ = adapt_snort2(rule)
        keys = [k for k, _ in adapted.options]
        assert keys.index("content") < keys.index("http_uri")

    def test_snort3_sticky_relocated(self):
        rule = parse_ids_rule(GOLDEN_SNORT3, RuleFormat.SNORT3)
        adapted, _ = adapt_snort2(rule)
        keys = [k for k, _ in adapted.options]
        first_content = keys.index("content")
        assert keys[first_content + 1] == "http_uri"
        assert adapted.text.startswith("alert tcp")

    def test_plain_tcp_rule_unchanged(self):
        rule = parse_ids_rule(GOLDEN_SNORT2.replace("sid:2025010", "sid:2025011"),
                              RuleFormat.SNORT3)
        adapted, _ = adapt_snort2(rule)
        assert adapted.header.protocol == "tcp"
        assert [k for k, _ in adapted.options] == [k for k, _ in rule.options]

    def test_validity_preserved_on_goldens(self):
        for text, fmt in ((GOLDEN_SURICATA, RuleFormat.SURICATA),
                          (GOLDEN_SNORT3, RuleFormat.SNORT3)):
            rule = parse_ids_rule(text, fmt)
            assert validate(rule).valid
            adapted, _ = adapt_snort2(rule)
            report = validate(adapted)
            assert report.valid, [f.to_dict() for f in report.findings]

    def test_wrong_format_rejected(self):
        rule = parse_ids_rule(GOLDEN_SNORT2, RuleFormat.SNORT2)
        with pytest.raises(ValueError):
            adapt_snort2(rule)


class TestAdaptSuricata6:
    def test_to_lowercase_removed(self):
        rule = parse_ids_rule(
            'alert http any any -> any 80 (msg:"x"; http.uri; to_lowercase; '
            'content:"/a"; sid:1000001; rev:1;)',
            RuleFormat.SURICATA)
        adapted, findings = adapt_suricata6(rule)
        assert not adapted.has_option("to_lowercase")
        assert findings

    def test_dotprefix_removed(self):
        rule = parse_ids_rule(
            'alert dns any any -> any 53 (msg:"x"; dns.query; dotprefix; '
            'content:".evil.test"; sid:1000002; rev:1;)',
            RuleFormat.SURICATA)
        adapted, findings = adapt_suricata6(rule)
        assert not adapted.has_option("dotprefix")

    def test_no_transforms_unchanged(self):
        rule = parse_ids_rule(GOLDEN_SURICATA, RuleFormat.SURICATA)
        adapted, findings = adapt_suricata6(rule)
        assert adapted.text == rule.text and findings == []

    def test_validity_preserved(self):
        rule = parse_ids_rule(
            'alert http any any -> any 80 (msg:"x"; to_lowercase; content:"/a"; '
            "sid:1000001; rev:1;)",
            RuleFormat.SURICATA)
        assert validate(rule).valid  # transform is only a warning for suricata
        adapted, _ = adapt_suricata6(rule)
        assert validate(adapted).valid


class TestAdaptYara:
    def test_pe_import_prepended(self):
        rule = parse_yara_rule(
            "rule uses_pe {\n condition:\n pe.entry_point == 0x1000\n}")
        adapted, findings = adapt_yara(rule)
        assert adapted.text.startswith('import "pe"')
        assert findings

    def test_math_import_prepended(self):
        rule = parse_yara_rule(
            "rule uses_math {\n condition:\n math.entropy(0, filesize) > 7.0\n}")
        adapted, _ = adapt_yara(rule)
        assert 'import "math"' in adapted.text

    def test_existing_import_untouched(self):
        text = 'import "pe"\nrule has_import {\n condition:\n pe.is_dll()\n}'
        rule = parse_yara_rule(text)
        adapted, findings = adapt_yara(rule)
        assert adapted.text == text and findings == []

    def test_idempotent(self):
        rule = parse_yara_rule(
            "rule uses_elf {\n condition:\n elf.type == elf.ET_EXEC\n}")
        once, _ = adapt_yara(rule)
        twice, findings = adapt_yara(once)
        assert twice.text == once.text and findings == []

    def test_validity_preserved(self):
        rule = parse_yara_rule(GOLDEN_YARA)
        assert validate(rule).valid
        adapted, _ = adapt_yara(rule)
        assert validate(adapted).valid


class TestHarness:
    def test_skipped_without_engine(self, monkeypatch):
        for var in ("SOCENGINE_SNORT_BIN", "SOCENGINE_SURICATA_BIN", "SOCENGINE_YARA_BIN"):
            monkeypatch.delenv(var, raising=False)
        rule = parse_ids_rule(GOLDEN_SNORT2, RuleFormat.SNORT2)
        result = engine_harness(rule)
        assert result.status == "skipped"

    def test_missing_binary_skipped(self):
        rule = parse_ids_rule(GOLDEN_SNORT2, RuleFormat.SNORT2)
        result = engine_harness(rule, engine_path="/nonexistent/snort")
        assert result.status == "skipped"

    def test_engine_verdict_passthrough(self, tmp_path):
        accept = tmp_path / "accept.sh"
        accept.write_text("#!/bin/sh\nexit 0\n")
        accept.chmod(0o755)
        reject = tmp_path / "reject.sh"
        reject.write_text("#!/bin/sh\necho 'bad rule' >&2\nexit 1\n")
        reject.chmod(0o755)
        rule = parse_ids_rule(GOLDEN_SNORT2, RuleFormat.SNORT2)
        assert engine_harness(rule, engine_path=str(accept)).status == "pass"
        failed = engine_harness(rule, engine_path=str(reject))
        assert failed.status == "fail" and "bad rule" in failed.stderr
