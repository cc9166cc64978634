//! Hostile reward programs with the validation stage expected to stop each.
//! Shared by the lang tests and the workspace acceptance suite.

use rewardsmith_lang::Stage;

const SIG: &str = "(prompts, completions, answer, **kwargs)";

pub fn body(name: &str, lines: &str) -> String {
    let mut s = format!("def {name}{SIG}:\n");
    for l in lines.lines() {
        s.push_str("    ");
        s.push_str(l);
        s.push('\n');
    }
    s
}

pub fn ok_tail() -> &'static str {
    "return [0.0 for c in completions]"
}

/// (label, name, source, expected stage, substring of the reason)
pub fn corpus() -> Vec<(&'static str, String, String, Stage, &'static str)> {
    let n = "evil";
    let mut v = vec![
        ("import os", n.to_string(), body(n, &format!("import os\n{}", ok_tail())), Stage::Modules, "'os'"),
        ("import subprocess", n.into(), body(n, &format!("import subprocess\n{}", ok_tail())), Stage::Modules, "subprocess"),
        ("from socket", n.into(), body(n, &format!("from socket import socket\n{}", ok_tail())), Stage::Modules, "socket"),
        ("module-level import", n.into(), format!("import urllib.request\n{}", body(n, ok_tail())), Stage::Modules, "urllib"),
        ("hidden in tuple import", n.into(), body(n, &format!("import re, sys\n{}", ok_tail())), Stage::Modules, "sys"),
        ("dunder import", n.into(), body(n, &format!("m = __import__('os')\n{}", ok_tail())), Stage::Modules, "__import__"),
        ("open file", n.into(), body(n, &format!("open('/etc/passwd')\n{}", ok_tail())), Stage::Modules, "open"),
        ("eval", n.into(), body(n, &format!("eval('1 + 1')\n{}", ok_tail())), Stage::Modules, "eval"),
        ("class escape", n.into(), body(n, &format!("x = ''.__class__\n{}", ok_tail())), Stage::Modules, "__class__"),
        ("getattr", n.into(), body(n, &format!("f = getattr(completions, 'append')\n{}", ok_tail())), Stage::Modules, "getattr"),
        ("protected check_answer", "check_answer".into(), body("check_answer", ok_tail()), Stage::Ast, "protected-name"),
        (
            "redefine match_format_exactly",
            n.into(),
            format!("{}\n{}", body("match_format_exactly", ok_tail()), body(n, ok_tail())),
            Stage::Ast,
            "protected-name",
        ),
        ("while loop", n.into(), body(n, &format!("while True:\n    pass\n{}", ok_tail())), Stage::Ast, "While"),
        ("class def", n.into(), format!("class A:\n    pass\n{}", body(n, ok_tail())), Stage::Ast, "ClassDef"),
        ("lambda", n.into(), body(n, "f = lambda x: x\nreturn [f(0.0) for c in completions]"), Stage::Ast, "Lambda"),
        ("re.compile attribute", n.into(), body(n, &format!("import re\nr = re.compile('a')\n{}", ok_tail())), Stage::Ast, "compile"),
        ("self recursion", n.into(), body(n, "return evil(prompts, completions, answer)"), Stage::Ast, "unknown name"),
        ("unknown builtin", n.into(), body(n, &format!("x = hex(3)\n{}", ok_tail())), Stage::Ast, "unknown name"),
        ("wrong signature", n.into(), "def evil(completions):\n    return [0.0]\n".into(), Stage::Ast, "signature"),
        ("syntax error", n.into(), body(n, "return [0.0 for c in"), Stage::Ast, "parse error"),
        ("deep nesting", n.into(), body(n, &format!("x = {}1{}\n{}", "(".repeat(200), ")".repeat(200), ok_tail())), Stage::Ast, "nest"),
        ("nested def", n.into(), body(n, &format!("def g(x):\n    return x\n{}", ok_tail())), Stage::Ast, "NestedFunctionDef"),
        ("step bomb", n.into(), body(n, &format!("for i in range(10 ** 9):\n    pass\n{}", ok_tail())), Stage::Probe, "step-limit"),
        (
            "step bomb behind except",
            n.into(),
            body(n, &format!("try:\n    for i in range(10 ** 9):\n        pass\nexcept Exception:\n    pass\n{}", ok_tail())),
            Stage::Probe,
            "step-limit",
        ),
        ("string bomb", n.into(), body(n, &format!("s = 'x' * (10 ** 10)\n{}", ok_tail())), Stage::Probe, "memory"),
        ("list doubling", n.into(), body(n, &format!("x = [0]\nfor i in range(64):\n    x = x + x\n{}", ok_tail())), Stage::Probe, "memory"),
        (
            "catastrophic regex",
            n.into(),
            body(n, &format!("import re\nm = re.search(r'(a+)+$', 'a' * 40 + '!')\n{}", ok_tail())),
            Stage::Probe,
            "timeout",
        ),
        ("scalar return", n.into(), body(n, "return 1.0"), Stage::Probe, "shape"),
        ("short return", n.into(), body(n, "return [1.0]"), Stage::Probe, "shape"),
        ("nan return", n.into(), body(n, "return [float('nan') for c in completions]"), Stage::Probe, "non-finite"),
        ("string scores", n.into(), body(n, "return ['1' for c in completions]"), Stage::Probe, "shape"),
        (
            "crash on malformed",
            n.into(),
            body(n, "out = []\nfor c in completions:\n    out.append(float(c[0]['content'].split('<solution>')[1][:1]))\nreturn out"),
            Stage::Probe,
            "fault",
        ),
    ];
    // oversize program: many trivial statements
    let big = (0..1200).map(|i| format!("x{i} = {i}")).collect::<Vec<_>>().join("\n");
    v.push(("oversize", n.into(), body(n, &format!("{big}\n{}", ok_tail())), Stage::Limits, "ast-size"));
    v
}
