use super::ast::{Atom, AtomicPredicate, Formula, FormulaKind};

const VARS: [&str; 3] = ["x", "y", "z"];

fn var_name(idx: usize, dims: usize) -> String {
    if idx < dims {
        format!("p{}", VARS[idx])
    } else {
        format!("v{}", VARS[idx - dims])
    }
}

/// Shortest round-tripping decimal, with `-0` folded to `0`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// `{c1*v1 + c2*v2 >= r}` with zero terms omitted and unit coefficients bare.
pub fn print_predicate(p: &AtomicPredicate) -> String {
    let dims = p.coefficients.len() / 2;
    let mut s = String::from("{");
    let mut first = true;
    for (i, &c) in p.coefficients.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let name = var_name(i, dims);
        let mag = c.abs();
        let term = if mag == 1.0 { name } else { format!("{}*{name}", fmt_num(mag)) };
        match (first, c < 0.0) {
            (true, false) => s.push_str(&term),
            (true, true) => {
                s.push('-');
                s.push_str(&term);
            }
            (false, false) => {
                s.push_str(" + ");
                s.push_str(&term);
            }
            (false, true) => {
                s.push_str(" - ");
                s.push_str(&term);
            }
        }
        first = false;
    }
    s.push_str(" >= ");
    s.push_str(&fmt_num(-p.offset));
    s.push('}');
    s
}

fn is_binary(f: &Formula) -> bool {
    matches!(f.kind(), FormulaKind::And(_) | FormulaKind::Or(_) | FormulaKind::Until(..))
}

fn wrap(f: &Formula, parens: bool) -> String {
    let s = print_canonical(f);
    if parens {
        format!("({s})")
    } else {
        s
    }
}

fn join_sorted(children: &[Formula], sep: &str, needs_parens: impl Fn(&Formula) -> bool) -> String {
    let mut parts: Vec<String> = children.iter().map(|c| wrap(c, needs_parens(c))).collect();
    parts.sort();
    parts.join(sep)
}

/// Deterministic normal text: sorted flattened connectives, single spaces,
/// fixed operator spellings.
pub fn print_canonical(f: &Formula) -> String {
    match f.kind() {
        FormulaKind::True => "true".into(),
        FormulaKind::Atom(Atom::Predicate(p)) => print_predicate(p),
        FormulaKind::Atom(Atom::Region(r)) => {
            if r.negated {
                format!("!{}", r.region.name)
            } else {
                r.region.name.clone()
            }
        }
        FormulaKind::Not(c) => format!("!{}", wrap(c, is_binary(c))),
        FormulaKind::Globally(iv, c) => format!("G{iv} {}", wrap(c, is_binary(c))),
        FormulaKind::Eventually(iv, c) => format!("F{iv} {}", wrap(c, is_binary(c))),
        FormulaKind::Until(iv, l, r) => {
            format!("{} U{iv} {}", wrap(l, is_binary(l)), wrap(r, is_binary(r)))
        }
        FormulaKind::And(cs) => join_sorted(cs, " & ", |c| matches!(c.kind(), FormulaKind::Or(_) | FormulaKind::And(_))),
        FormulaKind::Or(cs) => join_sorted(cs, " | ", |c| matches!(c.kind(), FormulaKind::Or(_))),
    }
}

/// Structurally sorted copy whose child order matches the canonical text.
/// Ids are reassigned in preorder.
pub fn canonicalize(f: &Formula) -> Formula {
    fn go(f: &Formula) -> Formula {
        match f.kind() {
            FormulaKind::True | FormulaKind::Atom(_) => f.clone(),
            FormulaKind::Not(c) => Formula::not(go(c)),
            FormulaKind::Globally(iv, c) => Formula::globally(*iv, go(c)),
            FormulaKind::Eventually(iv, c) => Formula::eventually(*iv, go(c)),
            FormulaKind::Until(iv, l, r) => Formula::until(*iv, go(l), go(r)),
            FormulaKind::And(cs) | FormulaKind::Or(cs) => {
                let mut kids: Vec<(String, Formula)> = cs
                    .iter()
                    .map(|c| {
                        let g = go(c);
                        let parens = match f.kind() {
                            FormulaKind::And(_) => matches!(g.kind(), FormulaKind::Or(_) | FormulaKind::And(_)),
                            _ => matches!(g.kind(), FormulaKind::Or(_)),
                        };
                        (wrap(&g, parens), g)
                    })
                    .collect();
                kids.sort_by(|a, b| a.0.cmp(&b.0));
                let kids = kids.into_iter().map(|(_, g)| g).collect();
                if matches!(f.kind(), FormulaKind::And(_)) {
                    Formula::and(kids)
                } else {
                    Formula::or(kids)
                }
            }
        }
    }
    go(f).renumbered()
}
