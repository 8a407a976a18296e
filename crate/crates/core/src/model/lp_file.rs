use std::fmt::Write as _;

use super::{MilpModel, Relation, VarKind};

const LINE: usize = 78;

/// Round to 12 significant digits and print in the shortest form that
/// reads back to the rounded value.
fn num(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

fn push_expr(out: &mut String, head: &str, terms: &[(usize, f64)], model: &MilpModel) {
    let mut line = format!(" {head}:");
    if terms.is_empty() {
        line.push_str(" 0");
    }
    for (j, &(v, c)) in terms.iter().enumerate() {
        let name = &model.vars[v].name;
        let sign = if c < 0.0 { "-" } else { "+" };
        let mag = c.abs();
        let term = match (j, mag == 1.0) {
            (0, true) if c > 0.0 => name.clone(),
            (0, false) if c > 0.0 => format!("{} {name}", num(mag)),
            (_, true) => format!("{sign} {name}"),
            (_, false) => format!("{sign} {} {name}", num(mag)),
        };
        if line.len() + 1 + term.len() > LINE && line.len() > head.len() + 2 {
            out.push_str(&line);
            out.push('\n');
            line = String::from(" ");
        }
        line.push(' ');
        line.push_str(&term);
    }
    out.push_str(&line);
}

/// LP-format text: `Minimize`, `Subject To`, `Bounds`, `Binary`, `End`, in
/// declaration order. Rows are named after their constraint family.
pub fn export_lp(model: &MilpModel) -> String {
    let mut out = String::from("Minimize\n");
    push_expr(&mut out, "obj", &model.objective, model);
    out.push('\n');
    out.push_str("Subject To\n");
    for row in &model.rows {
        push_expr(&mut out, &row.name, &row.terms, model);
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {rel} {}", num(row.rhs));
    }
    let continuous: Vec<_> = model.vars.iter().filter(|v| v.kind == VarKind::Continuous).collect();
    if !continuous.is_empty() {
        out.push_str("Bounds\n");
        for v in continuous {
            if v.hi.is_finite() {
                let _ = writeln!(out, " {} <= {} <= {}", num(v.lo), v.name, num(v.hi));
            } else {
                let _ = writeln!(out, " {} >= {}", v.name, num(v.lo));
            }
        }
    }
    let binaries: Vec<_> = model.vars.iter().filter(|v| v.kind == VarKind::Binary).collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n");
        for v in binaries {
            let _ = writeln!(out, " {}", v.name);
        }
    }
    out.push_str("End\n");
    out
}
