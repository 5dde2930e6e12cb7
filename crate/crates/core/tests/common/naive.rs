//! A second verifier written from the text conventions alone, scanning
//! characters by hand. It shares no code with the library's verifier.

use steersmc::tasks::ConstraintSpec;

fn scan_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn bare(word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    let mut lo = 0;
    while lo < chars.len() && !chars[lo].is_alphanumeric() {
        lo += 1;
    }
    let mut hi = chars.len();
    while hi > lo && !chars[hi - 1].is_alphanumeric() {
        hi -= 1;
    }
    chars[lo..hi].iter().collect()
}

fn scan_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for i in 0..chars.len() {
        cur.push(chars[i]);
        let ends = matches!(chars[i], '.' | '!' | '?')
            && (i + 1 == chars.len() || chars[i + 1].is_whitespace());
        if ends {
            let t = cur.trim().to_string();
            if !t.is_empty() {
                out.push(t);
            }
            cur.clear();
        }
    }
    let t = cur.trim().to_string();
    if !t.is_empty() {
        out.push(t);
    }
    out
}

pub fn naive_check(c: &ConstraintSpec, text: &str) -> bool {
    let ws = scan_words(text);
    match c {
        ConstraintSpec::CharCountExact { count } => text.chars().count() == *count,
        ConstraintSpec::WordCountExact { count } => ws.len() == *count,
        ConstraintSpec::WordCountMin { count } => ws.len() >= *count,
        ConstraintSpec::PositionedWords { words } => words.iter().all(|pw| {
            pw.position >= 1 && pw.position <= ws.len() && bare(&ws[pw.position - 1]) == pw.word
        }),
        ConstraintSpec::ContainsWords { words } => words.iter().all(|w| {
            let want = w.to_lowercase();
            ws.iter().any(|x| bare(x).to_lowercase() == want)
        }),
        ConstraintSpec::ForbiddenWords { words } => !ws.iter().any(|x| words.contains(&bare(x))),
        ConstraintSpec::MaxWordLength { max } => ws.iter().all(|x| bare(x).chars().count() <= *max),
        ConstraintSpec::SentenceCountExact { count } => scan_sentences(text).len() == *count,
        ConstraintSpec::SentenceLastWords { words } => {
            let ss = scan_sentences(text);
            ss.len() == words.len()
                && ss.iter().zip(words).all(|(s, w)| {
                    let last = scan_words(s).pop().map(|x| bare(&x)).unwrap_or_default();
                    &last == w
                })
        }
        ConstraintSpec::PerSentenceWordBounds { min, max } => {
            let ss = scan_sentences(text);
            !ss.is_empty()
                && ss.iter().all(|s| {
                    let n = scan_words(s).len();
                    min.is_none_or(|m| n >= m) && max.is_none_or(|m| n <= m)
                })
        }
    }
}
