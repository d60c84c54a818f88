use super::parse::default_label;
use super::{Expr, Program, Stmt};

/// Prints a program in the surface syntax. Labels equal to the positional
/// default are omitted, so the output parses back to the same program.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (i, stmt) in p.stmts.iter().enumerate() {
        match stmt {
            Stmt::Assume { name, expr } => {
                out.push_str("(assume ");
                out.push_str(name);
                out.push(' ');
                write_expr(expr, &mut 0, &|k| default_label(i, Some(name), k), &mut out);
            }
            Stmt::Observe { call, value } => {
                out.push_str("(observe ");
                write_expr(&Expr::Dist(call.clone()), &mut 0, &|k| default_label(i, None, k), &mut out);
                out.push(' ');
                write_expr(value, &mut 0, &|_| String::new(), &mut out);
            }
        }
        out.push_str(")\n");
    }
    out
}

/// Prints an expression; labels are omitted when they match the defaults
/// assigned by [`super::parse_expr`].
pub fn print_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut 0, &|k| format!("e/{k}"), &mut out);
    out
}

fn write_expr(e: &Expr, k: &mut usize, default: &dyn Fn(usize) -> String, out: &mut String) {
    let here = *k;
    *k += 1;
    if *e == Expr::church_true() || *e == Expr::church_false() {
        *k += 2;
        out.push_str(if *e == Expr::church_true() { "#t" } else { "#f" });
        return;
    }
    match e {
        Expr::Var(x) => out.push_str(x),
        Expr::Literal(r) => out.push_str(&crate::format_rational(r)),
        Expr::Lambda { param, body } => {
            out.push_str("(lambda (");
            out.push_str(param);
            out.push_str(") ");
            write_expr(body, k, default, out);
            out.push(')');
        }
        Expr::App { func, arg } => {
            out.push('(');
            write_expr(func, k, default, out);
            out.push(' ');
            write_expr(arg, k, default, out);
            out.push(')');
        }
        Expr::Dist(call) => {
            if &*call.dist == "bernoulli" {
                out.push_str("(flip ");
            } else {
                out.push_str("(dist ");
                out.push_str(&call.dist);
                out.push(' ');
            }
            write_expr(&call.param, k, default, out);
            if *call.label != *default(here) {
                out.push_str(" :label ");
                out.push_str(&quote(&call.label));
            }
            out.push(')');
        }
    }
}

fn quote(s: &str) -> String {
    let mut q = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

#[cfg(test)]
mod tests {
    use super::super::{parse_expr, parse_program};
    use super::*;

    #[test]
    fn round_trips_programs() {
        let src = "(assume xor (lambda (a) (lambda (b) (if a (if b #f #t) b))))\n\
                   (assume x (flip 1/2 :label \"left\"))\n\
                   (assume y (dist categorical ((a 1/3) (b 2/3))))\n\
                   (assume z (if x (flip 1/3) (flip 2/3)))\n\
                   (observe (flip (if ((xor x) y) 0 1)) #t)\n";
        let p = parse_program(src).unwrap();
        let printed = print_program(&p);
        assert_eq!(parse_program(&printed).unwrap(), p);
        assert!(printed.contains(":label \"left\""));
        assert!(!printed.contains(":label \"z/"));
    }

    #[test]
    fn prints_literals_and_booleans() {
        let e = parse_expr("((f #t) -3/4)").unwrap();
        assert_eq!(print_expr(&e), "((f #t) -3/4)");
    }

    #[test]
    fn relabelled_hoisted_call_prints_label() {
        let p = parse_program("(assume y (f (flip 1/2)))").unwrap();
        let Stmt::Assume { expr: Expr::App { arg, .. }, .. } = &p.stmts[0] else { panic!() };
        let Expr::Dist(call) = &**arg else { panic!() };
        let moved = Program {
            stmts: vec![Stmt::Observe { call: call.clone(), value: Expr::church_true() }],
        };
        let text = print_program(&moved);
        assert!(text.contains(":label \"y/2\""), "{text}");
        assert_eq!(parse_program(&text).unwrap(), moved);
    }
}
