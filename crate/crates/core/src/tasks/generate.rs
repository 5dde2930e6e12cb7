//! Deterministic task instances for the sentence and paragraph families.
//!
//! | family  | constraints                                  | parameter ranges                     |
//! |---------|----------------------------------------------|--------------------------------------|
//! | sent_01 | exact character count                        | 40..=120 characters                  |
//! | sent_02 | exact word count, three positioned words     | 10..=20 words, positions increasing  |
//! | sent_03 | minimum word count, maximum word length      | 6..=12 words, 5..=8 characters       |
//! | sent_04 | contains three words                         | drawn from the content-word pool     |
//! | para_02 | exact sentence count, three forbidden words  | 2..=5 sentences                      |
//! | para_03 | exact sentence count, per-sentence bounds    | 2..=5 sentences, min 8..=14, +4..=8  |
//! | para_05 | sentence last words                          | 2..=4 sentences                      |

use super::constraints::{ConstraintSpec, PositionedWord, TaskSpec};
use crate::error::{Error, Result};
use crate::rng::{stream_key, Lane, StreamRng};

pub const TASK_FAMILIES: &[&str] = &[
    "sent_01", "sent_02", "sent_03", "sent_04", "para_02", "para_03", "para_05",
];

const CONTENT_WORDS: &[&str] = &[
    "river", "garden", "museum", "winter", "harbor", "lecture", "Glasgow", "market", "engine",
    "letter", "silver", "forest", "council", "student", "morning", "bridge", "painter", "station",
    "valley", "college",
];

const FUNCTION_WORDS: &[&str] = &[
    "be", "this", "is", "the", "and", "of", "it", "was", "a", "to",
];

fn range(rng: &mut StreamRng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// `k` distinct entries of `pool`, in draw order.
fn pick<'a>(rng: &mut StreamRng, pool: &[&'a str], k: usize) -> Vec<&'a str> {
    let mut left: Vec<&str> = pool.to_vec();
    (0..k).map(|_| left.remove(rng.below(left.len()))).collect()
}

fn quoted(words: &[&str]) -> String {
    words
        .iter()
        .map(|w| format!("'{w}'"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

fn one(task_type: &str, rng: &mut StreamRng) -> (String, Vec<ConstraintSpec>) {
    match task_type {
        "sent_01" => {
            let n = range(rng, 40, 120);
            (
                format!("Please generate a sentence with exactly {n} characters. Include whitespace into your character count."),
                vec![ConstraintSpec::CharCountExact { count: n }],
            )
        }
        "sent_02" => {
            let n = range(rng, 10, 20);
            let mut positions: Vec<usize> = Vec::new();
            while positions.len() < 3 {
                let p = range(rng, 1, n);
                if !positions.contains(&p) {
                    positions.push(p);
                }
            }
            positions.sort_unstable();
            let words = pick(rng, CONTENT_WORDS, 3);
            let ord: Vec<String> = positions.iter().map(|p| ordinal(*p)).collect();
            (
                format!(
                    "Please generate a sentence:\n1) with exactly {n} words;\n2) with the {} words to be {} respectively.",
                    ord.join(", "),
                    quoted(&words)
                ),
                vec![
                    ConstraintSpec::WordCountExact { count: n },
                    ConstraintSpec::PositionedWords {
                        words: positions
                            .iter()
                            .zip(&words)
                            .map(|(p, w)| PositionedWord { position: *p, word: w.to_string() })
                            .collect(),
                    },
                ],
            )
        }
        "sent_03" => {
            let n = range(rng, 6, 12);
            let max = range(rng, 5, 8);
            (
                format!(
                    "Please generate a sentence:\n1) with at least {n} words;\n2) with all words having at most {max} characters."
                ),
                vec![ConstraintSpec::WordCountMin { count: n }, ConstraintSpec::MaxWordLength { max }],
            )
        }
        "sent_04" => {
            let words = pick(rng, CONTENT_WORDS, 3);
            (
                format!(
                    "Please generate a sentence containing the word {}.",
                    quoted(&words)
                ),
                vec![ConstraintSpec::ContainsWords {
                    words: owned(&words),
                }],
            )
        }
        "para_02" => {
            let n = range(rng, 2, 5);
            let words = pick(rng, FUNCTION_WORDS, 3);
            let mut prompt =
                format!("Please generate a paragraph:\n1) with exactly {n} sentences;");
            for (i, w) in words.iter().enumerate() {
                prompt.push_str(&format!("\n{}) not containing the word '{w}'", i + 2));
                prompt.push(if i == 2 { '.' } else { ';' });
            }
            (
                prompt,
                vec![
                    ConstraintSpec::SentenceCountExact { count: n },
                    ConstraintSpec::ForbiddenWords {
                        words: owned(&words),
                    },
                ],
            )
        }
        "para_03" => {
            let n = range(rng, 2, 5);
            let lo = range(rng, 8, 14);
            let hi = lo + range(rng, 4, 8);
            (
                format!(
                    "Please generate a paragraph:\n1) with exactly {n} sentences;\n2) with all sentences having at least {lo} words;\n3) with all sentences having at most {hi} words."
                ),
                vec![
                    ConstraintSpec::SentenceCountExact { count: n },
                    ConstraintSpec::PerSentenceWordBounds { min: Some(lo), max: Some(hi) },
                ],
            )
        }
        "para_05" => {
            let n = range(rng, 2, 4);
            let words = pick(rng, CONTENT_WORDS, n);
            (
                format!(
                    "Please generate a paragraph:\n1) with exactly {n} sentences;\n2) with sentences having the last word to be {} respectively.",
                    quoted(&words)
                ),
                vec![
                    ConstraintSpec::SentenceCountExact { count: n },
                    ConstraintSpec::SentenceLastWords { words: owned(&words) },
                ],
            )
        }
        _ => unreachable!("checked by caller"),
    }
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// `count` instances of `task_type`, identical for identical `seed`.
pub fn generate_task_instances(task_type: &str, count: usize, seed: u64) -> Result<Vec<TaskSpec>> {
    if !TASK_FAMILIES.contains(&task_type) {
        return Err(Error::schema(
            "task_type",
            format!(
                "unknown family {task_type:?}; known: {}",
                TASK_FAMILIES.join(", ")
            ),
        ));
    }
    let mut parts = vec![seed];
    parts.extend(task_type.bytes().map(u64::from));
    let family = stream_key(&parts);
    (0..count)
        .map(|i| {
            let mut rng = StreamRng::for_lane(family, Lane::Tasks, i as u64);
            let (prompt_text, constraints) = one(task_type, &mut rng);
            let task = TaskSpec {
                id: Some(format!("{task_type}-{seed}-{i}")),
                task_type: task_type.into(),
                prompt_text,
                constraints,
            };
            task.validate()?;
            Ok(task)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        for fam in TASK_FAMILIES {
            let a = generate_task_instances(fam, 20, 7).unwrap();
            assert_eq!(a, generate_task_instances(fam, 20, 7).unwrap());
            assert_ne!(a, generate_task_instances(fam, 20, 8).unwrap(), "{fam}");
        }
    }

    #[test]
    fn sent_02_positions_fit() {
        for t in generate_task_instances("sent_02", 50, 1).unwrap() {
            let ConstraintSpec::WordCountExact { count } = t.constraints[0] else {
                panic!()
            };
            let ConstraintSpec::PositionedWords { words } = &t.constraints[1] else {
                panic!()
            };
            assert!(words.windows(2).all(|w| w[0].position < w[1].position));
            assert!(words.iter().all(|w| (1..=count).contains(&w.position)));
        }
    }

    #[test]
    fn unknown_family() {
        assert!(generate_task_instances("para_99", 1, 0).is_err());
    }

    #[test]
    fn ordinals() {
        assert_eq!(
            [1, 2, 3, 4, 11, 12, 13, 21].map(ordinal),
            ["1st", "2nd", "3rd", "4th", "11th", "12th", "13th", "21st"]
        );
    }
}
