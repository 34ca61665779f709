//! Closed-form order parameters, printed as plain-text tables.

use openmaps::observables::{self, ObservableError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    /// `<sigma^+_i sigma^-_j>` in `|D(m,N)>`.
    Order,
    /// Order of the equal-weight Dicke mixture.
    Mixture,
    /// `<S^+ S^->` in `|D(m,N)>`.
    Ssm,
    All,
}

impl std::str::FromStr for Table {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "order" => Ok(Table::Order),
            "mixture" => Ok(Table::Mixture),
            "ssm" => Ok(Table::Ssm),
            "all" => Ok(Table::All),
            other => Err(format!("unknown analytics table {other:?} (order, mixture, ssm, all)")),
        }
    }
}

/// Renders the requested tables for `n_min <= N <= n_max`.
pub fn render(table: Table, n_min: usize, n_max: usize) -> Result<String, ObservableError> {
    let mut out = String::new();
    let n_min = n_min.max(2);
    if matches!(table, Table::Order | Table::All) {
        out.push_str("# <s+_i s-_j> in D(m,N), i != j\nN,m,order\n");
        for n in n_min..=n_max {
            for m in 0..=n {
                out.push_str(&format!("{n},{m},{}\n", observables::analytic_dicke_order(m, n)?));
            }
        }
    }
    if matches!(table, Table::Mixture | Table::All) {
        out.push_str("# order of the equal-weight Dicke mixture\nN,order\n");
        for n in n_min..=n_max {
            out.push_str(&format!("{n},{}\n", observables::mixture_order(n)?));
        }
    }
    if matches!(table, Table::Ssm | Table::All) {
        out.push_str("# <S+ S-> in D(m,N)\nN,m,ssm\n");
        for n in n_min..=n_max {
            for m in 0..=n {
                out.push_str(&format!("{n},{m},{}\n", observables::analytic_s_plus_s_minus(m, n)?));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(text: &str, prefix: &str) -> f64 {
        let line = text.lines().find(|l| l.starts_with(prefix)).unwrap();
        line.rsplit(',').next().unwrap().parse().unwrap()
    }

    #[test]
    fn known_rows() {
        let t = render(Table::Order, 3, 3).unwrap();
        assert!((value(&t, "3,2,") - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(value(&t, "3,0,"), 0.0);
        let t = render(Table::Mixture, 2, 5).unwrap();
        for n in 2..=5 {
            assert!((value(&t, &format!("{n},")) - 0.25).abs() < 1e-12);
        }
    }
}
