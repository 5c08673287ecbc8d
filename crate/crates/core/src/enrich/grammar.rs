//! Deterministic grammar for drawing callout text.
//!
//! Recognized forms, tried in this order:
//!
//! * an optional `<n>X` multiplicity prefix (`4X`, `2 x`, `3×`)
//! * GD&T frames: `⌖` position, `⌓`/`⌒` profile, `↗`/`⌰` runout,
//!   `⏥` flatness, or the ASCII words, followed by an optional `Ø` zone,
//!   a tolerance value, material modifiers and datum letters
//! * datum letters in boxes: `[A]`, `|B|`, or a lone capital letter
//! * diameter: `Ø`, `⌀`, `ø`, `%%c` or `DIA` before the value
//! * radius `R<v>`, thread `M<d>[x<pitch>]`, counterbore `⌴`/`CBORE`,
//!   countersink `⌵`/`CSK`, depth `↧<v>` or `DEPTH <v>`, roughness `Ra <v>`
//! * bare numerics, `<v>°` angles and `<a> x <b>°` chamfers
//!
//! After the primary value: `±t` / `+/-t` tolerance, `↧<v>` / `<v> DEEP`
//! depth modifiers, `THRU`, and thread classes such as `-6H`.

use serde::{Deserialize, Serialize};

use crate::model::NormalizedType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchQuality {
    /// The whole text was consumed by the grammar.
    Exact,
    /// A leading callout was recognized; trailing text was not.
    Partial,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Callout {
    pub kind: NormalizedType,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub pitch: Option<f64>,
    pub multiplicity: u32,
    pub has_diameter_symbol: bool,
    pub depth: Option<f64>,
    pub datums: Vec<char>,
    pub modifiers: Vec<String>,
    pub quality: MatchQuality,
}

impl Callout {
    fn unknown() -> Self {
        Callout {
            kind: NormalizedType::Unknown,
            value: None,
            tolerance: None,
            pitch: None,
            multiplicity: 1,
            has_diameter_symbol: false,
            depth: None,
            datums: Vec::new(),
            modifiers: Vec::new(),
            quality: MatchQuality::None,
        }
    }
}

struct Scanner {
    chars: Vec<char>,
    pos: usize,
}

impl Scanner {
    fn new(text: &str) -> Self {
        // Frame separators and boxes carry no meaning beyond token boundaries.
        let chars = text
            .chars()
            .map(|c| if matches!(c, '|' | '[' | ']') { ' ' } else { c })
            .collect();
        Scanner { chars, pos: 0 }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_any(&mut self, set: &[char]) -> Option<char> {
        let c = self.peek()?;
        if set.contains(&c) {
            self.pos += 1;
            Some(c)
        } else {
            None
        }
    }

    /// Case-insensitive keyword match that must end on a non-letter.
    fn eat_word(&mut self, word: &str) -> bool {
        let n = word.chars().count();
        if self.pos + n > self.chars.len() {
            return false;
        }
        let matches = self.chars[self.pos..self.pos + n]
            .iter()
            .zip(word.chars())
            .all(|(a, b)| a.eq_ignore_ascii_case(&b));
        let boundary = self
            .chars
            .get(self.pos + n)
            .is_none_or(|c| !c.is_ascii_alphabetic());
        if matches && boundary {
            self.pos += n;
            true
        } else {
            false
        }
    }

    /// Case-insensitive prefix match with no boundary requirement.
    fn eat_prefix(&mut self, word: &str) -> bool {
        let n = word.chars().count();
        if self.pos + n > self.chars.len() {
            return false;
        }
        if self.chars[self.pos..self.pos + n]
            .iter()
            .zip(word.chars())
            .all(|(a, b)| a.eq_ignore_ascii_case(&b))
        {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn integer(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse().ok()
    }

    fn number(&mut self) -> Option<f64> {
        let start = self.pos;
        let mut digits = 0;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
            digits += 1;
        }
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            self.pos = start;
            return None;
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse().ok()
    }

    fn rest(&self) -> String {
        self.chars[self.pos.min(self.chars.len())..]
            .iter()
            .collect::<String>()
            .trim()
            .to_string()
    }
}

fn eat_diameter_symbol(s: &mut Scanner) -> bool {
    if s.eat_any(&['Ø', '⌀', 'ø']).is_some() || s.eat_prefix("%%c") {
        return true;
    }
    let save = s.pos;
    if s.eat_prefix("DIA") {
        s.eat('.');
        if s.peek().is_none_or(|c| !c.is_ascii_alphabetic()) {
            return true;
        }
    }
    s.pos = save;
    false
}

fn eat_multiplicity(s: &mut Scanner) -> Option<u32> {
    let save = s.pos;
    if let Some(n) = s.integer() {
        s.skip_ws();
        if s.eat_any(&['X', 'x', '×']).is_some() {
            // `4X5` or a trailing `4X` is not a pattern prefix.
            let next_ok = s
                .peek()
                .is_some_and(|c| c.is_whitespace() || !c.is_ascii_digit());
            s.skip_ws();
            // `1 x 45°` is a chamfer, not a pattern.
            let after = s.pos;
            let is_chamfer = s.number().is_some() && s.peek() == Some('°');
            s.pos = after;
            if next_ok && !is_chamfer && !s.at_end() && n >= 1 {
                return Some(n);
            }
        }
    }
    s.pos = save;
    None
}

fn gdt_kind(s: &mut Scanner) -> Option<NormalizedType> {
    if let Some(c) = s.eat_any(&['⌖', '⌓', '⌒', '↗', '⌰', '⏥']) {
        return Some(match c {
            '⌖' => NormalizedType::GdtPosition,
            '⌓' | '⌒' => NormalizedType::GdtProfile,
            '↗' | '⌰' => NormalizedType::GdtRunout,
            _ => NormalizedType::GdtFlatness,
        });
    }
    for (word, kind) in [
        ("POSITION", NormalizedType::GdtPosition),
        ("POS", NormalizedType::GdtPosition),
        ("PROFILE", NormalizedType::GdtProfile),
        ("RUNOUT", NormalizedType::GdtRunout),
        ("FLATNESS", NormalizedType::GdtFlatness),
    ] {
        if s.eat_word(word) {
            return Some(kind);
        }
    }
    None
}

fn parse_gdt(s: &mut Scanner, out: &mut Callout) {
    s.skip_ws();
    if eat_diameter_symbol(s) {
        out.has_diameter_symbol = true;
        s.skip_ws();
    }
    out.tolerance = s.number();
    loop {
        s.skip_ws();
        if s.eat_any(&['Ⓜ', 'Ⓛ', 'Ⓢ']).is_some() || s.eat_prefix("(M)") || s.eat_prefix("(L)")
        {
            out.modifiers.push("material_condition".into());
            continue;
        }
        match (s.peek(), s.peek_at(1)) {
            (Some(c), next)
                if c.is_ascii_uppercase() && next.is_none_or(|n| !n.is_ascii_alphanumeric()) =>
            {
                out.datums.push(c);
                s.pos += 1;
            }
            _ => break,
        }
    }
}

fn parse_tolerance(s: &mut Scanner) -> Option<f64> {
    let save = s.pos;
    s.skip_ws();
    if s.eat('±') || s.eat_prefix("+/-") || s.eat_prefix("%%p") {
        s.skip_ws();
        if let Some(t) = s.number() {
            return Some(t);
        }
    }
    s.pos = save;
    None
}

/// Trailing modifiers shared by dimensional callouts.
fn parse_suffixes(s: &mut Scanner, out: &mut Callout) {
    loop {
        let save = s.pos;
        s.skip_ws();
        if s.at_end() {
            return;
        }
        if let Some(t) = parse_tolerance(s) {
            out.tolerance = Some(t);
            continue;
        }
        if s.eat_word("DEEP") {
            // `10 DEEP` turns a bare value into a depth.
            if out.kind == NormalizedType::Linear {
                out.kind = NormalizedType::Depth;
            } else {
                out.modifiers.push("deep".into());
            }
            continue;
        }
        if s.eat('↧') || s.eat_word("DEPTH") {
            s.skip_ws();
            if let Some(d) = s.number() {
                out.depth = Some(d);
                continue;
            }
        }
        if s.eat_word("THRU") || s.eat_word("THROUGH") {
            out.modifiers.push("thru".into());
            continue;
        }
        if out.kind == NormalizedType::Thread && s.eat('-') {
            // thread class, e.g. 6H or 6g
            let start = s.pos;
            while s.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
                s.pos += 1;
            }
            if s.pos > start {
                out.modifiers.push(format!(
                    "class {}",
                    s.chars[start..s.pos].iter().collect::<String>()
                ));
                continue;
            }
        }
        s.pos = save;
        return;
    }
}

pub fn parse_callout_grammar(text: &str) -> Callout {
    let mut out = Callout::unknown();
    let mut s = Scanner::new(text);
    s.skip_ws();
    if s.at_end() {
        return out;
    }

    if let Some(n) = eat_multiplicity(&mut s) {
        out.multiplicity = n;
    }
    s.skip_ws();

    if let Some(kind) = gdt_kind(&mut s) {
        out.kind = kind;
        parse_gdt(&mut s, &mut out);
        return finish(s, out);
    }

    // Lone datum letter.
    if let (Some(c), None) = (s.peek(), s.peek_at(1).filter(|c| !c.is_whitespace())) {
        if c.is_ascii_uppercase() && s.rest().chars().count() == 1 {
            s.pos += 1;
            out.kind = NormalizedType::DatumRef;
            out.datums.push(c);
            return finish(s, out);
        }
    }

    let primary = if eat_diameter_symbol(&mut s) {
        out.has_diameter_symbol = true;
        Some(NormalizedType::Diameter)
    } else if s.eat_any(&['⌴']).is_some() || s.eat_word("CBORE") || s.eat_word("C'BORE") {
        Some(NormalizedType::Counterbore)
    } else if s.eat_any(&['⌵']).is_some() || s.eat_word("CSK") || s.eat_word("CSINK") {
        Some(NormalizedType::Countersink)
    } else if s.eat('↧') || s.eat_word("DEPTH") {
        Some(NormalizedType::Depth)
    } else if s.eat_prefix("RA")
        && s.peek()
            .is_some_and(|c| c.is_whitespace() || c.is_ascii_digit())
    {
        Some(NormalizedType::Roughness)
    } else if matches!(s.peek(), Some('R') | Some('r'))
        && s.peek_at(1).is_some_and(|c| c.is_ascii_digit())
    {
        s.pos += 1;
        Some(NormalizedType::Radius)
    } else if matches!(s.peek(), Some('M') | Some('m'))
        && s.peek_at(1).is_some_and(|c| c.is_ascii_digit())
    {
        s.pos += 1;
        Some(NormalizedType::Thread)
    } else {
        None
    };

    match primary {
        Some(kind) => {
            out.kind = kind;
            s.skip_ws();
            // Counterbore/countersink values may repeat the diameter symbol.
            if matches!(
                kind,
                NormalizedType::Counterbore | NormalizedType::Countersink
            ) && eat_diameter_symbol(&mut s)
            {
                out.has_diameter_symbol = true;
                s.skip_ws();
            }
            out.value = s.number();
            if out.value.is_none() {
                return partial_or_unknown(out);
            }
            if kind == NormalizedType::Thread {
                let save = s.pos;
                if s.eat_any(&['x', 'X', '×']).is_some() {
                    match s.number() {
                        Some(p) => out.pitch = Some(p),
                        None => s.pos = save,
                    }
                }
            }
        }
        None => {
            let Some(v) = s.number() else {
                return partial_or_unknown(out);
            };
            out.value = Some(v);
            out.kind = NormalizedType::Linear;
            if s.eat('°') {
                out.kind = NormalizedType::Angle;
            } else {
                // chamfer: `1 x 45°`
                let save = s.pos;
                s.skip_ws();
                if s.eat_any(&['x', 'X', '×']).is_some() {
                    s.skip_ws();
                    if let Some(a) = s.number() {
                        if s.eat('°') {
                            out.kind = NormalizedType::Angle;
                            out.modifiers.push(format!("chamfer leg {v}"));
                            out.value = Some(a);
                        } else {
                            s.pos = save;
                        }
                    } else {
                        s.pos = save;
                    }
                } else {
                    s.pos = save;
                }
            }
        }
    }
    parse_suffixes(&mut s, &mut out);
    finish(s, out)
}

fn partial_or_unknown(mut out: Callout) -> Callout {
    // A recognized prefix without its value is still a weak signal.
    if out.kind != NormalizedType::Unknown || out.multiplicity > 1 {
        out.quality = MatchQuality::Partial;
        if out.kind == NormalizedType::Unknown {
            out.multiplicity = 1;
        }
        out
    } else {
        Callout::unknown()
    }
}

fn finish(mut s: Scanner, mut out: Callout) -> Callout {
    s.skip_ws();
    out.quality = if s.at_end() {
        MatchQuality::Exact
    } else {
        MatchQuality::Partial
    };
    if out.quality == MatchQuality::Partial {
        out.modifiers.push(format!("unparsed `{}`", s.rest()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diameter_with_tolerance() {
        let c = parse_callout_grammar("Ø10 ±0.05");
        assert_eq!(c.kind, NormalizedType::Diameter);
        assert_eq!(c.value, Some(10.0));
        assert_eq!(c.tolerance, Some(0.05));
        assert!(c.has_diameter_symbol);
        assert_eq!(c.quality, MatchQuality::Exact);
    }

    #[test]
    fn pattern_thread() {
        let c = parse_callout_grammar("2X M6");
        assert_eq!(c.multiplicity, 2);
        assert_eq!(c.kind, NormalizedType::Thread);
        assert_eq!(c.value, Some(6.0));
    }

    #[test]
    fn thread_pitch_and_class() {
        let c = parse_callout_grammar("M8x1.25-6H");
        assert_eq!(c.kind, NormalizedType::Thread);
        assert_eq!(c.value, Some(8.0));
        assert_eq!(c.pitch, Some(1.25));
        assert_eq!(c.quality, MatchQuality::Exact);
    }

    #[test]
    fn empty_is_unknown() {
        let c = parse_callout_grammar("");
        assert_eq!(c.kind, NormalizedType::Unknown);
        assert_eq!(c.quality, MatchQuality::None);
        assert_eq!(parse_callout_grammar("   ").kind, NormalizedType::Unknown);
    }

    #[test]
    fn ascii_diameter_escapes() {
        for text in ["%%c12", "%%C12", "DIA 12", "DIA.12", "⌀12", "ø12"] {
            let c = parse_callout_grammar(text);
            assert_eq!(c.kind, NormalizedType::Diameter, "{text}");
            assert_eq!(c.value, Some(12.0), "{text}");
            assert!(c.has_diameter_symbol, "{text}");
        }
    }

    #[test]
    fn radius_depth_and_linear() {
        let r = parse_callout_grammar("R5");
        assert_eq!((r.kind, r.value), (NormalizedType::Radius, Some(5.0)));
        let d = parse_callout_grammar("↧12");
        assert_eq!((d.kind, d.value), (NormalizedType::Depth, Some(12.0)));
        let d = parse_callout_grammar("12 DEEP");
        assert_eq!((d.kind, d.value), (NormalizedType::Depth, Some(12.0)));
        let l = parse_callout_grammar("25.4");
        assert_eq!((l.kind, l.value), (NormalizedType::Linear, Some(25.4)));
    }

    #[test]
    fn diameter_with_depth_modifier() {
        let c = parse_callout_grammar("4X Ø6.6 ↧10");
        assert_eq!(c.multiplicity, 4);
        assert_eq!(c.kind, NormalizedType::Diameter);
        assert_eq!(c.value, Some(6.6));
        assert_eq!(c.depth, Some(10.0));
        assert_eq!(c.quality, MatchQuality::Exact);
    }

    #[test]
    fn gdt_frames() {
        let c = parse_callout_grammar("|⌖|Ø0.1 Ⓜ|A|B|");
        assert_eq!(c.kind, NormalizedType::GdtPosition);
        assert_eq!(c.tolerance, Some(0.1));
        assert_eq!(c.datums, vec!['A', 'B']);
        assert_eq!(c.quality, MatchQuality::Exact);
        assert_eq!(
            parse_callout_grammar("⏥ 0.05").kind,
            NormalizedType::GdtFlatness
        );
        assert_eq!(
            parse_callout_grammar("RUNOUT 0.02 A").kind,
            NormalizedType::GdtRunout
        );
        assert_eq!(
            parse_callout_grammar("⌓ 0.2 A").kind,
            NormalizedType::GdtProfile
        );
    }

    #[test]
    fn datum_box() {
        let c = parse_callout_grammar("[A]");
        assert_eq!(c.kind, NormalizedType::DatumRef);
        assert_eq!(c.datums, vec!['A']);
    }

    #[test]
    fn chamfer_and_angle() {
        let c = parse_callout_grammar("1 x 45°");
        assert_eq!((c.kind, c.value), (NormalizedType::Angle, Some(45.0)));
        let a = parse_callout_grammar("30°");
        assert_eq!((a.kind, a.value), (NormalizedType::Angle, Some(30.0)));
    }

    #[test]
    fn counterbore_and_roughness() {
        let c = parse_callout_grammar("⌴ Ø11 ↧6.5");
        assert_eq!(
            (c.kind, c.value, c.depth),
            (NormalizedType::Counterbore, Some(11.0), Some(6.5))
        );
        let r = parse_callout_grammar("Ra 1.6");
        assert_eq!((r.kind, r.value), (NormalizedType::Roughness, Some(1.6)));
    }

    #[test]
    fn trailing_text_is_partial() {
        let c = parse_callout_grammar("Ø10 H7 REAM");
        assert_eq!(c.kind, NormalizedType::Diameter);
        assert_eq!(c.quality, MatchQuality::Partial);
    }

    #[test]
    fn prose_is_unknown() {
        let c = parse_callout_grammar("BREAK ALL SHARP EDGES");
        assert_eq!(c.kind, NormalizedType::Unknown);
        assert_eq!(c.quality, MatchQuality::None);
    }

    proptest! {
        #[test]
        fn multiplicity_prefix_parses(n in 1u32..=100, sep in prop::sample::select(vec!["X ", "x ", " X ", "X"])) {
            let text = format!("{n}{sep}Ø5");
            let c = parse_callout_grammar(&text);
            prop_assert_eq!(c.multiplicity, n);
            prop_assert_eq!(c.kind, NormalizedType::Diameter);
            prop_assert_eq!(c.value, Some(5.0));
        }

        #[test]
        fn never_panics(text in "\\PC{0,24}") {
            let _ = parse_callout_grammar(&text);
        }
    }
}
