//! Independent re-derivations of task examples from their surface text.

use num_bigint::BigUint;

/// Splits `prompt >, answer` and checks a count line; returns its length.
pub fn check_count_line(line: &str) -> Result<usize, String> {
    let (prompt, answer) = line.split_once(" >, ").ok_or("no ' >, ' separator")?;
    let ends: Vec<u64> = prompt.split(", ").map(|s| s.parse().map_err(|_| format!("bad number {s:?}"))).collect::<Result<_, _>>()?;
    let [a, b] = ends[..] else {
        return Err(format!("prompt {prompt:?} is not two numbers"));
    };
    if a > b {
        return Err(format!("{a} > {b}"));
    }
    let answer: Vec<u64> = answer.split(", ").map(|s| s.parse().map_err(|_| format!("bad number {s:?}"))).collect::<Result<_, _>>()?;
    let expect: Vec<u64> = (a..=b).collect();
    if answer != expect {
        return Err(format!("answer {answer:?} does not count from {a} to {b}"));
    }
    Ok(answer.len())
}

fn tagged_digits(part: &str) -> Result<Vec<(String, u32)>, String> {
    let items: Vec<&str> = part.split(", ").collect();
    if items.len() % 2 != 0 {
        return Err(format!("odd item count in {part:?}"));
    }
    items
        .chunks(2)
        .map(|p| {
            let d: u32 = p[1].parse().map_err(|_| format!("bad digit {:?}", p[1]))?;
            if d > 9 {
                return Err(format!("digit {d}"));
            }
            Ok((p[0].to_string(), d))
        })
        .collect()
}

fn hint_index(tag: &str) -> Result<usize, String> {
    tag.strip_prefix('a').and_then(|s| s.parse().ok()).ok_or_else(|| format!("bad hint {tag:?}"))
}

/// Re-derives an addition line with arbitrary-precision arithmetic; returns
/// the operand width.
pub fn check_addition_line(line: &str, max_eval: usize) -> Result<usize, String> {
    let (operands, answer) = line.split_once(", >, ").ok_or("no '>'")?;
    let (lhs, rhs) = operands.split_once(", +, ").ok_or("no '+'")?;
    let (lhs, rhs) = (tagged_digits(lhs)?, tagged_digits(rhs)?);
    let n = lhs.len();
    if n == 0 || rhs.len() != n {
        return Err("operand widths differ".into());
    }
    let start = hint_index(&lhs[0].0)?;
    if start + n > max_eval {
        return Err(format!("hints run past a{}", max_eval - 1));
    }
    for (i, ((lt, _), (rt, _))) in lhs.iter().zip(&rhs).enumerate() {
        let want = format!("a{}", start + i);
        if *lt != want || *rt != want {
            return Err(format!("operand hints {lt}/{rt}, expected {want}"));
        }
    }
    let number = |ds: &[(String, u32)]| {
        let text: String = ds.iter().map(|(_, d)| char::from_digit(*d, 10).unwrap()).collect();
        BigUint::parse_bytes(text.as_bytes(), 10).unwrap()
    };
    let sum = number(&lhs) + number(&rhs);
    let mut digits: Vec<u32> = sum.to_str_radix(10).chars().rev().map(|c| c.to_digit(10).unwrap()).collect();
    digits.resize(digits.len().max(n), 0);

    let got = tagged_digits(answer)?;
    let mut expect: Vec<(String, u32)> = (0..n).map(|k| (format!("a{}", start + n - 1 - k), digits[k])).collect();
    if digits.len() > n {
        expect.push(("ac".into(), digits[n]));
    }
    if got != expect {
        return Err(format!("answer {got:?}, expected {expect:?}"));
    }
    Ok(n)
}
