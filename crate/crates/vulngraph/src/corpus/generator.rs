//! Seeded synthetic corpus of buffer-overflow functions.
//!
//! Samples come in safe/unsafe twin pairs built from the same template
//! instance: identical declarations, identical noise blocks, and a core
//! whose token multiset either matches exactly (the overflowing write is
//! moved inside/outside the guard) or differs in a single integer literal
//! (the guard checks the wrong bound). Labels are therefore decided by
//! control/data structure, not by token statistics — a bag-of-words model
//! sees (near-)identical inputs for both classes.
//!
//! Two template families are emitted, tagged with a CWE-style category:
//!
//! * `CWE-787` — guarded index is reassigned past the bound after the
//!   guard (unsafe) vs. write kept under the guard (safe).
//! * `CWE-120` — guard compares against the wrong bound before an index
//!   bump (unsafe) vs. the correct bound after it (safe).

use super::FunctionSample;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

/// Tuning knobs for [`generate_with`]. [`generate_synthetic`] uses the
/// defaults, which produce functions of roughly 30–70 CPG nodes.
#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    pub count: usize,
    pub vuln_ratio: f64,
    pub seed: u64,
    /// Upper bound on noise blocks between declarations and the core.
    pub max_noise_blocks: usize,
    /// Upper bound on filler statements after the core write.
    pub max_trailing_statements: usize,
}

impl GeneratorOptions {
    pub fn new(count: usize, vuln_ratio: f64, seed: u64) -> Self {
        GeneratorOptions {
            count,
            vuln_ratio,
            seed,
            max_noise_blocks: 3,
            max_trailing_statements: 2,
        }
    }
}

/// Generate `count` samples with exactly `round(count * vuln_ratio)`
/// labeled vulnerable. Pure function of its arguments: equal inputs give
/// byte-identical output.
pub fn generate_synthetic(count: usize, vuln_ratio: f64, seed: u64) -> Vec<FunctionSample> {
    generate_with(&GeneratorOptions::new(count, vuln_ratio, seed))
}

pub fn generate_with(options: &GeneratorOptions) -> Vec<FunctionSample> {
    assert!(options.count >= 1, "count must be positive");
    assert!(
        (0.0..=1.0).contains(&options.vuln_ratio),
        "vuln_ratio must lie in [0, 1]"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut pos_left = (options.count as f64 * options.vuln_ratio).round() as usize;
    let mut neg_left = options.count - pos_left;

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(options.count);
    let mut family_toggle = 0usize;
    let push = |code: String, label: u8, cwe: &str, out: &mut Vec<FunctionSample>| {
        out.push(FunctionSample {
            id: format!("syn-{:05}", out.len()),
            code,
            label,
            cwe: Some(cwe.to_string()),
            origin: "synthetic".to_string(),
        });
    };

    while pos_left > 0 || neg_left > 0 {
        let family = if family_toggle % 2 == 0 { Family::Reassign } else { Family::BadGuard };
        family_toggle += 1;
        let pair = fresh_pair(&mut rng, options, family, &mut seen);
        if pos_left > 0 && neg_left > 0 {
            push(pair.unsafe_code, 1, family.cwe(), &mut out);
            push(pair.safe_code, 0, family.cwe(), &mut out);
            pos_left -= 1;
            neg_left -= 1;
        } else if pos_left > 0 {
            push(pair.unsafe_code, 1, family.cwe(), &mut out);
            pos_left -= 1;
        } else {
            push(pair.safe_code, 0, family.cwe(), &mut out);
            neg_left -= 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    /// Unsafe: `if (i < S) { i = A; } buf[i] = c;` with `A >= S`.
    /// Safe twin moves the write under the guard: identical token multiset.
    Reassign,
    /// Unsafe: `if (i < G) { i = i + D; } buf[i] = c;` with bad bound `G`.
    /// Safe twin bumps first and guards with the true bound `S`: differs
    /// from the unsafe twin in one integer literal only.
    BadGuard,
}

impl Family {
    fn cwe(self) -> &'static str {
        match self {
            Family::Reassign => "CWE-787",
            Family::BadGuard => "CWE-120",
        }
    }
}

struct TwinPair {
    unsafe_code: String,
    safe_code: String,
}

/// Draw template instances until both twins are new, then record them.
/// The attempt bound keeps pathological option combinations (tiny
/// template space, huge count) from spinning forever.
fn fresh_pair(
    rng: &mut ChaCha8Rng,
    options: &GeneratorOptions,
    family: Family,
    seen: &mut HashSet<String>,
) -> TwinPair {
    for _ in 0..200 {
        let pair = instantiate(rng, options, family);
        if seen.contains(&pair.unsafe_code) || seen.contains(&pair.safe_code) {
            continue;
        }
        seen.insert(pair.unsafe_code.clone());
        seen.insert(pair.safe_code.clone());
        return pair;
    }
    instantiate(rng, options, family)
}

const FUNC_NAMES: [&str; 10] =
    ["process", "handle", "update", "fill_block", "copy_step", "transform", "run_pass", "emit", "scan", "pack"];
const INDEX_NAMES: [&str; 5] = ["i", "idx", "pos", "n", "off"];
const BUFFER_NAMES: [&str; 5] = ["buf", "arr", "data", "block", "dst"];
const NOISE_NAMES: [&str; 4] = ["j", "k", "t", "acc"];
const MESSAGES: [&str; 6] = ["start", "loop", "done", "check", "write", "ok"];
const INDEX_TYPES: [&str; 4] = ["int", "int", "long", "unsigned int"];

struct Template {
    func: String,
    index: String,
    buffer: String,
    index_type: String,
    /// Array size S, 2..=64.
    size: i64,
    /// Initial index value, in bounds.
    start: i64,
    noise: Vec<String>,
    noise_decl: Option<String>,
    trailing: Vec<String>,
}

fn instantiate(rng: &mut ChaCha8Rng, options: &GeneratorOptions, family: Family) -> TwinPair {
    let func = FUNC_NAMES.choose(rng).unwrap().to_string();
    let index = INDEX_NAMES.choose(rng).unwrap().to_string();
    let buffer = BUFFER_NAMES.choose(rng).unwrap().to_string();
    let index_type = INDEX_TYPES.choose(rng).unwrap().to_string();
    let noise_var = loop {
        let v = NOISE_NAMES.choose(rng).unwrap();
        if *v != index && *v != buffer {
            break v.to_string();
        }
    };

    let size = rng.gen_range(2..=64);
    let start = rng.gen_range(0..size);

    let mut noise = Vec::new();
    let mut uses_noise_var = false;
    let n_blocks = rng.gen_range(if options.max_noise_blocks == 0 { 0..=0 } else { 1..=options.max_noise_blocks });
    for _ in 0..n_blocks {
        noise.push(noise_block(rng, &noise_var, &buffer, size, &mut uses_noise_var));
    }
    let mut trailing = Vec::new();
    for _ in 0..rng.gen_range(0..=options.max_trailing_statements) {
        trailing.push(trailing_statement(rng, &noise_var, &mut uses_noise_var));
    }
    let noise_decl =
        uses_noise_var.then(|| format!("int {noise_var} = {};", rng.gen_range(0..16)));

    let template = Template {
        func,
        index,
        buffer,
        index_type,
        size,
        start,
        noise,
        noise_decl,
        trailing,
    };
    let written = (b'a' + rng.gen_range(0..26)) as char;

    match family {
        Family::Reassign => {
            // Reassignment past the bound; guard passes because start < S.
            let past = rng.gen_range(size..=size + 64);
            let unsafe_core = [
                format!("if ({} < {}) {{", template.index, template.size),
                format!("    {} = {};", template.index, past),
                "}".to_string(),
                format!("{}[{}] = '{written}';", template.buffer, template.index),
            ];
            let safe_core = [
                format!("if ({} < {}) {{", template.index, template.size),
                format!("    {}[{}] = '{written}';", template.buffer, template.index),
                "}".to_string(),
                format!("{} = {};", template.index, past),
            ];
            TwinPair {
                unsafe_code: render(&template, &unsafe_core),
                safe_code: render(&template, &safe_core),
            }
        }
        Family::BadGuard => {
            // Bump lands at or past S; the bad guard G still lets it through.
            let bump = rng.gen_range(template.size - template.start..=template.size - template.start + 32);
            let bad_bound = rng.gen_range(template.start + 1..=template.size + 16);
            let unsafe_core = [
                format!("if ({} < {bad_bound}) {{", template.index),
                format!("    {} = {} + {bump};", template.index, template.index),
                "}".to_string(),
                format!("{}[{}] = '{written}';", template.buffer, template.index),
            ];
            let safe_core = [
                format!("{} = {} + {bump};", template.index, template.index),
                format!("if ({} < {}) {{", template.index, template.size),
                format!("    {}[{}] = '{written}';", template.buffer, template.index),
                "}".to_string(),
            ];
            TwinPair {
                unsafe_code: render(&template, &unsafe_core),
                safe_code: render(&template, &safe_core),
            }
        }
    }
}

/// One noise block over the scratch variable or the buffer. Loops only
/// ever increase their counter toward a constant bound, so every
/// generated function terminates.
fn noise_block(
    rng: &mut ChaCha8Rng,
    var: &str,
    buffer: &str,
    size: i64,
    uses_noise_var: &mut bool,
) -> String {
    match rng.gen_range(0..8) {
        0 | 1 => {
            *uses_noise_var = true;
            let bound = rng.gen_range(1..=96);
            let step = rng.gen_range(1..=8);
            format!("if ({var} < {bound}) {{\n    {var} = {var} + {step};\n}}")
        }
        2 | 3 => {
            *uses_noise_var = true;
            let bound = rng.gen_range(1..=48);
            let step = rng.gen_range(1..=8);
            format!("while ({var} < {bound}) {{\n    {var} = {var} + {step};\n}}")
        }
        4 => {
            *uses_noise_var = true;
            let bound = rng.gen_range(1..=96);
            let inner_bound = rng.gen_range(1..=48);
            let step = rng.gen_range(1..=8);
            format!(
                "if ({var} < {bound}) {{\n    while ({var} < {inner_bound}) {{\n        {var} = {var} + {step};\n    }}\n}}"
            )
        }
        5 => {
            *uses_noise_var = true;
            let step = rng.gen_range(1..=9);
            format!("{var} = {var} + {step};")
        }
        6 => format!("printf(\"{}\");", MESSAGES.choose(rng).unwrap()),
        _ => {
            // In-bounds prefix write to the real buffer.
            let len = rng.gen_range(1..=size);
            format!("memset({buffer}, 0, {len});")
        }
    }
}

fn trailing_statement(rng: &mut ChaCha8Rng, var: &str, uses_noise_var: &mut bool) -> String {
    if rng.gen_bool(0.5) {
        *uses_noise_var = true;
        format!("{var} = {var} + {};", rng.gen_range(1..=9))
    } else {
        format!("printf(\"{}\");", MESSAGES.choose(rng).unwrap())
    }
}

/// Assemble the function: declarations, noise, core, trailing filler.
fn render(t: &Template, core: &[String]) -> String {
    let mut w = Writer::default();
    w.line(&format!("void {}() {{", t.func));
    w.indent += 1;
    w.line(&format!("{} {} = {};", t.index_type, t.index, t.start));
    w.line(&format!("char {}[{}];", t.buffer, t.size));
    if let Some(decl) = &t.noise_decl {
        w.line(decl);
    }
    for block in &t.noise {
        w.block(block);
    }
    for line in core {
        w.block(line);
    }
    for line in &t.trailing {
        w.line(line);
    }
    w.indent -= 1;
    w.line("}");
    w.out
}

#[derive(Default)]
struct Writer {
    out: String,
    indent: usize,
}

impl Writer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    /// Emit a possibly multi-line snippet, re-indenting each line and
    /// tracking braces so nested snippets stay aligned.
    fn block(&mut self, snippet: &str) {
        for raw in snippet.lines() {
            let line = raw.trim_start();
            if line.starts_with('}') {
                self.indent -= 1;
            }
            self.line(line);
            if line.ends_with('{') {
                self.indent += 1;
            }
        }
    }
}
