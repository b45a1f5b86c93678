use super::ReadabilityError;

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u' | b'y')
}

/// Syllable estimate for an alphabetic word.
///
/// Counts vowel groups (`y` is a vowel except word-initially), then applies
/// silent-e, `-es`/`-ed` and split-vowel corrections. Never returns 0.
pub fn count_syllables(word: &str) -> Result<u32, ReadabilityError> {
    if word.is_empty() || !word.chars().all(char::is_alphabetic) {
        return Err(ReadabilityError::NonAlphabetic(word.to_owned()));
    }
    let lower = word.to_lowercase();
    if !lower.is_ascii() {
        return Ok(vowel_groups_unicode(&lower).max(1));
    }
    let w = lower.as_bytes();
    let n = w.len();

    let mut groups = 0i32;
    let mut prev_vowel = false;
    for (i, &c) in w.iter().enumerate() {
        let v = is_vowel(c) && !(c == b'y' && i == 0);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }

    let consonant_at = |i: usize| !is_vowel(w[i]);
    let ends = |s: &str| lower.ends_with(s);

    // Silent final e, except consonant + "le" ("table", "little").
    if n > 2 && w[n - 1] == b'e' && !is_vowel(w[n - 2]) {
        let syllabic_le = w[n - 2] == b'l' && n > 3 && consonant_at(n - 3);
        if !syllabic_le {
            groups -= 1;
        }
    }
    // "-es": silent unless after a sibilant ("boxes", "ages", "wishes").
    if n > 3 && ends("es") && !is_vowel(w[n - 3]) {
        let sibilant = matches!(w[n - 3], b's' | b'x' | b'z' | b'c' | b'g')
            || (w[n - 3] == b'h' && matches!(w[n - 4], b'c' | b's'));
        let syllabic_les = w[n - 3] == b'l' && n > 4 && consonant_at(n - 4);
        if !sibilant && !syllabic_les {
            groups -= 1;
        }
    }
    // "-ed": silent unless after t or d ("wanted", "added").
    if n > 3 && ends("ed") && !is_vowel(w[n - 3]) && !matches!(w[n - 3], b't' | b'd') {
        groups -= 1;
    }
    // Silent e before common suffixes ("lovely", "careful", "statement").
    for suffix in ["ely", "eful", "ement", "eness"] {
        if n > suffix.len() + 1 && ends(suffix) && consonant_at(n - suffix.len() - 1) {
            groups -= 1;
        }
    }
    // Vowel pairs pronounced as two syllables ("lion", "video", "actual", "piano").
    for i in 1..n {
        let pair = (w[i - 1], w[i]);
        let before = if i >= 2 { Some(w[i - 2]) } else { None };
        let split = match pair {
            (b'i', b'o') | (b'i', b'a') => !matches!(before, Some(b'c' | b't' | b's' | b'x' | b'g')),
            (b'e', b'o') => before != Some(b'p'),
            (b'u', b'a') => !matches!(before, Some(b'q' | b'g')),
            _ => false,
        };
        if split {
            groups += 1;
        }
    }

    Ok(groups.max(1) as u32)
}

fn vowel_groups_unicode(word: &str) -> u32 {
    let mut groups = 0;
    let mut prev = false;
    for c in word.chars() {
        let v = "aeiouyàáâäèéêëìíîïòóôöùúûü".contains(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    groups
}

/// Syllables for an arbitrary word token.
///
/// Apostrophes are dropped, hyphenated and otherwise joined parts are counted
/// separately, and each run of digits counts as one syllable.
pub fn token_syllables(token: &str) -> u32 {
    let mut total = 0;
    let mut letters = String::new();
    let mut in_digits = false;
    let flush = |letters: &mut String, total: &mut u32| {
        if !letters.is_empty() {
            *total += count_syllables(letters).unwrap_or(1);
            letters.clear();
        }
    };
    for c in token.chars() {
        if c.is_alphabetic() {
            in_digits = false;
            letters.push(c);
        } else if c.is_ascii_digit() {
            flush(&mut letters, &mut total);
            if !in_digits {
                total += 1;
                in_digits = true;
            }
        } else if c == '\'' || c == '\u{2019}' {
            continue;
        } else {
            flush(&mut letters, &mut total);
            in_digits = false;
        }
    }
    flush(&mut letters, &mut total);
    total.max(1)
}
