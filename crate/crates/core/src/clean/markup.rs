//! XML/HTML tag removal and entity decoding.

use crate::text::named_entity;

/// Removes every `<...>` tag, decodes the predefined and numeric character
/// entities and collapses whitespace runs that touch a removed tag.
///
/// A whitespace run next to a removed tag becomes a single `'\n'` if it
/// contained a newline and a single `' '` otherwise, so that sentence lines
/// survive paragraph markup. Runs at the very start or end of the text that
/// touch a tag are dropped. A `<` without a later `>` is kept verbatim.
///
/// The pass is repeated until the text no longer changes: decoding
/// `&lt;b&gt;` yields a tag that has to be removed as well. Every pass that
/// changes the text makes it strictly shorter, so this terminates, and the
/// result is a fixpoint, which makes the function idempotent.
pub fn strip_markup(text: &str) -> String {
    let mut current = text.to_string();
    loop {
        let next = strip_once(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn strip_once(text: &str) -> String {
    if !text.contains('<') && !text.contains('&') {
        return text.to_string();
    }
    let (untagged, gaps) = remove_tags(text);
    let collapsed = if gaps.is_empty() {
        untagged
    } else {
        collapse_at_gaps(&untagged, &gaps)
    };
    decode_entities(&collapsed)
}

/// Drops `<[^>]*>` matches; returns the remaining text and the byte offsets
/// (in the output) where tags were removed.
fn remove_tags(text: &str) -> (String, Vec<usize>) {
    let mut out = String::with_capacity(text.len());
    let mut gaps = Vec::new();
    let mut rest = text;
    while let Some(lt) = rest.find('<') {
        match rest[lt..].find('>') {
            Some(gt) => {
                out.push_str(&rest[..lt]);
                if gaps.last() != Some(&out.len()) {
                    gaps.push(out.len());
                }
                rest = &rest[lt + gt + 1..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    (out, gaps)
}

fn collapse_at_gaps(text: &str, gaps: &[usize]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut gap_iter = gaps.iter().copied().peekable();
    let mut chars = text.char_indices().peekable();
    // A gap at offset == text.len() is handled after the loop.
    while let Some(&(start, c)) = chars.peek() {
        if !c.is_whitespace() {
            out.push(c);
            chars.next();
            continue;
        }
        let mut end = start;
        let mut has_newline = false;
        let mut run_len = 0;
        while let Some(&(i, c)) = chars.peek() {
            if !c.is_whitespace() {
                break;
            }
            has_newline |= c == '\n';
            run_len += 1;
            end = i + c.len_utf8();
            chars.next();
        }
        while gap_iter.peek().is_some_and(|&g| g < start) {
            gap_iter.next();
        }
        let touches_gap = gap_iter.peek().is_some_and(|&g| g <= end);
        if !touches_gap {
            out.push_str(&text[start..end]);
        } else if start == 0 || end == text.len() {
            // edge run introduced by a tag: drop it
        } else if run_len == 1 {
            out.push_str(&text[start..end]);
        } else {
            out.push(if has_newline { '\n' } else { ' ' });
        }
    }
    out
}

fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        if let Some((c, len)) = named_entity(rest).or_else(|| numeric_entity(rest)) {
            out.push(c);
            rest = &rest[len..];
        } else {
            out.push('&');
            rest = &rest[1..];
        }
    }
    out.push_str(rest);
    out
}

/// `&#123;` or `&#x7B;`. Invalid code points are not decoded.
fn numeric_entity(s: &str) -> Option<(char, usize)> {
    let body = s.strip_prefix("&#")?;
    let semi = body.find(';')?;
    let digits = &body[..semi];
    let value = match digits.strip_prefix(['x', 'X']) {
        Some(hex) if !hex.is_empty() && hex.len() <= 8 => u32::from_str_radix(hex, 16).ok()?,
        None if !digits.is_empty() && digits.len() <= 10 && digits.bytes().all(|b| b.is_ascii_digit()) => {
            digits.parse::<u32>().ok()?
        }
        _ => return None,
    };
    if value == 0 {
        return None;
    }
    let c = char::from_u32(value)?;
    Some((c, 2 + semi + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_text_is_identity() {
        assert_eq!(strip_markup("Tere, maailm!"), "Tere, maailm!");
        assert_eq!(strip_markup("a  b\n\nc"), "a  b\n\nc");
    }

    #[test]
    fn nested_tags() {
        assert_eq!(strip_markup("<p>Tere <b>maailm</b>!</p>"), "Tere maailm!");
    }

    #[test]
    fn entities() {
        assert_eq!(strip_markup("A &amp; B"), "A & B");
        // "<>" decodes into an empty tag, which the next pass removes.
        assert_eq!(strip_markup("&lt;&gt;&quot;&apos;"), "\"'");
        assert_eq!(strip_markup("&quot;x&apos;"), "\"x'");
        assert_eq!(strip_markup("&#228;&#xE4;&#XE4;"), "äää");
        assert_eq!(strip_markup("&#0; &#xD800; &#; &nbsp;"), "&#0; &#xD800; &#; &nbsp;");
    }

    #[test]
    fn decoded_tags_are_removed() {
        // The decoded "<b>" is itself a tag.
        assert_eq!(strip_markup("x &lt;b&gt; y"), "x y");
        assert_eq!(strip_markup("a &lt; b"), "a < b");
    }

    #[test]
    fn lone_lt_kept() {
        assert_eq!(strip_markup("1 < 2"), "1 < 2");
        assert_eq!(strip_markup("<p>1 < 2"), "1 < 2");
    }

    #[test]
    fn paragraph_markup_keeps_lines() {
        assert_eq!(
            strip_markup("<p>Esimene lause.</p>\n<p>Teine lause.</p>\n"),
            "Esimene lause.\nTeine lause."
        );
        assert_eq!(strip_markup("a <br/>   b"), "a b");
        assert_eq!(strip_markup("  <p> x </p>  "), "x");
    }

    fn markup_like() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("<".to_string()),
                Just(">".to_string()),
                Just("&".to_string()),
                Just("&amp;".to_string()),
                Just("&lt;".to_string()),
                Just("&gt;".to_string()),
                Just("&#60;".to_string()),
                Just("<p>".to_string()),
                Just(" ".to_string()),
                Just("\n".to_string()),
                "[a-zõäöü]{1,3}",
            ],
            0..24,
        )
        .prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn idempotent(s in markup_like()) {
            let once = strip_markup(&s);
            prop_assert_eq!(strip_markup(&once), once);
        }

        #[test]
        fn no_tags_remain(s in markup_like()) {
            let out = strip_markup(&s);
            if let Some(lt) = out.find('<') {
                prop_assert!(!out[lt..].contains('>'), "tag left in {:?}", out);
            }
        }
    }
}
