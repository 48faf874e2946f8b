use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use super::{parse_weight, Grammar, GrammarError, GrammarIssue, Production, Symbol, GRAMMAR_HEADER};

enum RawSymbol {
    Name(String),
    Words(Vec<String>),
}

struct RawRule {
    lhs: String,
    weight: BigRational,
    body: Vec<RawSymbol>,
    line: usize,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_body(body: &str) -> Result<Vec<RawSymbol>, String> {
    let mut out = Vec::new();
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix('"') {
            let close = after
                .find('"')
                .ok_or_else(|| "unterminated terminal string".to_string())?;
            let words = after[..close].split_whitespace().map(str::to_string).collect();
            out.push(RawSymbol::Words(words));
            rest = after[close + 1..].trim_start();
        } else {
            let end = rest.find(|c: char| c.is_whitespace() || c == '"').unwrap_or(rest.len());
            let name = &rest[..end];
            if !is_identifier(name) {
                return Err(format!("invalid nonterminal name {name:?}"));
            }
            out.push(RawSymbol::Name(name.to_string()));
            rest = rest[end..].trim_start();
        }
    }
    Ok(out)
}

fn parse_rule(text: &str, line: usize) -> Result<RawRule, GrammarIssue> {
    let syntax = |message: String| GrammarIssue::Syntax { line, message };
    let (lhs, rest) = text
        .split_once("->")
        .ok_or_else(|| syntax("expected `NONTERM -> weight : body`".into()))?;
    let lhs = lhs.trim();
    if !is_identifier(lhs) {
        return Err(syntax(format!("invalid nonterminal name {lhs:?}")));
    }
    let (weight_text, body) = rest
        .split_once(':')
        .ok_or_else(|| syntax("missing `:` after weight".into()))?;
    let weight = parse_weight(weight_text).ok_or_else(|| syntax(format!("invalid weight {:?}", weight_text.trim())))?;
    if weight <= BigRational::zero() {
        return Err(GrammarIssue::NonPositiveWeight {
            line,
            weight: weight_text.trim().to_string(),
        });
    }
    let body = parse_body(body).map_err(syntax)?;
    Ok(RawRule {
        lhs: lhs.to_string(),
        weight,
        body,
        line,
    })
}

pub fn load_grammar(source: &str) -> Result<Grammar, GrammarError> {
    let fail = |issues| Err(GrammarError { issues });
    let mut lines = source.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == GRAMMAR_HEADER => {}
        other => {
            return fail(vec![GrammarIssue::MissingHeader {
                found: other.map(|(_, l)| l.to_string()).unwrap_or_default(),
            }])
        }
    }

    let mut issues = Vec::new();
    let mut raw_rules = Vec::new();
    for (idx, raw) in lines {
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        match parse_rule(text, idx + 1) {
            Ok(rule) => raw_rules.push(rule),
            Err(issue) => issues.push(issue),
        }
    }
    if !issues.is_empty() {
        return fail(issues);
    }
    if raw_rules.is_empty() {
        return fail(vec![GrammarIssue::Empty]);
    }

    let mut nonterminals: Vec<String> = Vec::new();
    let mut nonterminal_index: HashMap<String, usize> = HashMap::new();
    for rule in &raw_rules {
        if !nonterminal_index.contains_key(&rule.lhs) {
            nonterminal_index.insert(rule.lhs.clone(), nonterminals.len());
            nonterminals.push(rule.lhs.clone());
        }
    }

    let mut terminals: Vec<String> = Vec::new();
    let mut terminal_index: HashMap<String, usize> = HashMap::new();
    let mut rules: Vec<Vec<Production>> = vec![Vec::new(); nonterminals.len()];
    for rule in raw_rules {
        let mut body = Vec::new();
        for sym in rule.body {
            match sym {
                RawSymbol::Name(name) => match nonterminal_index.get(&name) {
                    Some(&n) => body.push(Symbol::Nonterminal(n)),
                    None => issues.push(GrammarIssue::UndefinedSymbol {
                        line: rule.line,
                        symbol: name,
                    }),
                },
                RawSymbol::Words(words) => {
                    for w in words {
                        let t = *terminal_index.entry(w.clone()).or_insert_with(|| {
                            terminals.push(w);
                            terminals.len() - 1
                        });
                        body.push(Symbol::Terminal(t));
                    }
                }
            }
        }
        rules[nonterminal_index[&rule.lhs]].push(Production {
            weight: rule.weight,
            probability: 0.0,
            body,
            line: rule.line,
        });
    }
    if !issues.is_empty() {
        return fail(issues);
    }

    let mut cumulative = Vec::with_capacity(rules.len());
    for prods in &mut rules {
        let total: BigRational = prods.iter().map(|p| p.weight.clone()).sum();
        let mut acc = 0.0;
        let mut cum = Vec::with_capacity(prods.len());
        for p in prods.iter_mut() {
            p.probability = (&p.weight / &total).to_f64().unwrap_or(0.0);
            acc += p.probability;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        cumulative.push(cum);
    }

    let (min_height, fallback) = derivation_heights(&rules);
    let unproductive: Vec<usize> = (0..nonterminals.len()).filter(|&n| min_height[n] == u32::MAX).collect();
    if let Some(&first) = unproductive.first() {
        let witness = unproductive_cycle(&rules, &min_height, first)
            .into_iter()
            .map(|n| nonterminals[n].clone())
            .collect();
        return fail(vec![GrammarIssue::Unproductive {
            nonterminals: unproductive.iter().map(|&n| nonterminals[n].clone()).collect(),
            witness,
        }]);
    }

    Ok(Grammar {
        nonterminals,
        nonterminal_index,
        terminals,
        start: 0,
        rules,
        cumulative,
        min_height,
        fallback,
    })
}

/// Minimum derivation height per nonterminal (`u32::MAX` when unproductive)
/// and the first production achieving it.
fn derivation_heights(rules: &[Vec<Production>]) -> (Vec<u32>, Vec<usize>) {
    let mut height = vec![u32::MAX; rules.len()];
    let mut best = vec![0usize; rules.len()];
    loop {
        let mut changed = false;
        for (n, prods) in rules.iter().enumerate() {
            for (pi, p) in prods.iter().enumerate() {
                let mut h = 1u32;
                for s in &p.body {
                    if let Symbol::Nonterminal(c) = s {
                        h = h.max(height[*c].saturating_add(1));
                    }
                }
                if h < height[n] {
                    height[n] = h;
                    best[n] = pi;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // Ties go to the first declared production.
    for (n, prods) in rules.iter().enumerate() {
        if height[n] == u32::MAX {
            continue;
        }
        best[n] = prods
            .iter()
            .position(|p| {
                p.body.iter().fold(1u32, |h, s| match s {
                    Symbol::Nonterminal(c) => h.max(height[*c].saturating_add(1)),
                    Symbol::Terminal(_) => h,
                }) == height[n]
            })
            .unwrap_or(0);
    }
    (height, best)
}

fn unproductive_cycle(rules: &[Vec<Production>], height: &[u32], from: usize) -> Vec<usize> {
    let mut path = vec![from];
    let mut current = from;
    loop {
        // Every production of an unproductive nonterminal mentions another one.
        let next = rules[current]
            .iter()
            .flat_map(|p| p.body.iter())
            .find_map(|s| match s {
                Symbol::Nonterminal(c) if height[*c] == u32::MAX => Some(*c),
                _ => None,
            })
            .expect("unproductive nonterminal refers to another unproductive one");
        if let Some(pos) = path.iter().position(|&n| n == next) {
            let mut cycle = path.split_off(pos);
            cycle.push(next);
            return cycle;
        }
        path.push(next);
        current = next;
    }
}
