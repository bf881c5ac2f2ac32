//! The six hand-built rate scenarios (four users, three to five stations)
//! used to exercise the dual-decomposition allocator.

use ndarray::{array, Array2};
use thiserror::Error;

use crate::msa::{AllocationFormula, MsaParams, PriceState};

/// Starting station price for the hand-built scenarios. Starting from
/// above lets station prices settle from the over-priced side, which keeps
/// idle stations from dropping to zero and attracting every user.
pub const TESTCASE_STATION_PRICE: f64 = 6.0;
pub const TESTCASE_USER_PRICE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TestcaseError {
    #[error("unknown test case {0} (expected 1..=6)")]
    UnknownCase(u8),
    #[error("unknown variant {variant:?} for test case {case}")]
    UnknownVariant { case: u8, variant: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Testcase {
    pub number: u8,
    pub variant: Option<char>,
    pub rates_dl: Array2<f64>,
    pub rates_ul: Array2<f64>,
    pub params: MsaParams,
}

impl Testcase {
    pub fn initial_prices(&self) -> PriceState {
        let (users, stations) = self.rates_dl.dim();
        PriceState::uniform(users, stations, TESTCASE_STATION_PRICE, TESTCASE_USER_PRICE)
    }

    pub fn label(&self) -> String {
        match self.variant {
            Some(v) => format!("{}{}", self.number, v),
            None => self.number.to_string(),
        }
    }
}

/// Downlink rates shared by cases 1 through 4.
fn shared_downlink() -> Array2<f64> {
    array![[8.0, 1.0, 29.0], [0.5, 15.0, 1.0], [25.0, 2.0, 2.0], [8.0, 28.0, 0.9]]
}

/// Rate matrices and solver settings of case `n`. Case 6 has variants
/// `a` (default) and `b`.
///
/// * 1 – a user with near-equal uplink rates everywhere; the downlink
///   matrix is not given for this case and the shared one is used.
///   Original allocation formula.
/// * 2 – tight asymmetry constraints; original allocation formula.
/// * 3 – fairness sweep (override `alpha`).
/// * 4 – decoupled uplink choice.
/// * 5 – a fourth station with unit rates to everyone.
/// * 6 – a fifth station; station 4 unreachable except, in variant `b`,
///   for user 2.
pub fn load_testcase(n: u8, variant: Option<&str>) -> Result<Testcase, TestcaseError> {
    let base = MsaParams {
        alpha: 0.5,
        epsilon: 2.0,
        step: 0.004,
        iterations: 8000,
        formula: AllocationFormula::Modified,
        hysteresis: 0.0,
    };
    let original = MsaParams { formula: AllocationFormula::Original, ..base };
    let variant_char = match (n, variant) {
        (_, None) => None,
        (6, Some("a")) => Some('a'),
        (6, Some("b")) => Some('b'),
        (_, Some(v)) => return Err(TestcaseError::UnknownVariant { case: n, variant: v.to_string() }),
    };
    let (rates_dl, rates_ul, params) = match n {
        1 => (
            shared_downlink(),
            array![[28.0, 30.0, 28.0], [0.5, 15.0, 1.0], [30.0, 1.0, 5.2], [0.3, 32.0, 0.5]],
            original,
        ),
        2 => (
            shared_downlink(),
            array![[2.0, 1.0, 25.0], [0.5, 15.0, 1.0], [30.0, 1.0, 5.2], [0.3, 32.0, 0.5]],
            original,
        ),
        3 => (
            shared_downlink(),
            array![[8.0, 1.0, 25.0], [0.5, 15.0, 1.0], [30.0, 1.0, 5.2], [0.3, 32.0, 0.5]],
            base,
        ),
        4 => (
            shared_downlink(),
            array![[25.0, 1.0, 0.5], [0.5, 15.0, 1.0], [30.0, 1.0, 0.1], [0.3, 32.0, 0.5]],
            base,
        ),
        5 => (
            array![
                [8.0, 1.0, 29.0, 1.0],
                [0.5, 15.0, 1.0, 1.0],
                [25.0, 2.0, 2.0, 1.0],
                [8.0, 28.0, 0.9, 1.0]
            ],
            array![
                [8.0, 1.0, 25.0, 1.0],
                [0.5, 15.0, 1.0, 1.0],
                [30.0, 1.0, 5.2, 1.0],
                [0.3, 32.0, 0.5, 1.0]
            ],
            base,
        ),
        6 => {
            let mut dl = array![
                [8.0, 1.0, 30.0, 0.0, 1.0],
                [0.5, 15.0, 1.0, 0.0, 1.0],
                [25.0, 2.0, 2.0, 0.0, 1.0],
                [8.0, 28.0, 0.9, 0.0, 1.0]
            ];
            let mut ul = array![
                [8.0, 1.0, 20.0, 0.0, 1.0],
                [0.5, 15.0, 1.0, 0.0, 1.0],
                [27.0, 1.0, 5.2, 0.0, 1.0],
                [0.3, 32.0, 0.5, 0.0, 1.0]
            ];
            if variant_char == Some('b') {
                dl.row_mut(1).assign(&array![0.5, 15.0, 1.0, 8.0, 2.0]);
                ul.row_mut(1).assign(&array![0.5, 15.0, 1.0, 1.0, 3.0]);
            }
            (dl, ul, base)
        }
        other => return Err(TestcaseError::UnknownCase(other)),
    };
    let variant = if n == 6 { variant_char.or(Some('a')) } else { None };
    Ok(Testcase { number: n, variant, rates_dl, rates_ul, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcriptions() {
        let t1 = load_testcase(1, None).unwrap();
        assert_eq!(t1.rates_ul.row(0).to_vec(), vec![28.0, 30.0, 28.0]);
        let t3 = load_testcase(3, None).unwrap();
        assert_eq!(t3.rates_dl.row(3).to_vec(), vec![8.0, 28.0, 0.9]);
        let t5 = load_testcase(5, None).unwrap();
        assert_eq!(t5.rates_dl.ncols(), 4);
        assert!(t5.rates_ul.column(3).iter().all(|&r| r == 1.0));
        let a = load_testcase(6, None).unwrap();
        let b = load_testcase(6, Some("b")).unwrap();
        assert_eq!(a.label(), "6a");
        assert_eq!(b.rates_dl.row(1).to_vec(), vec![0.5, 15.0, 1.0, 8.0, 2.0]);
        assert_eq!(a.rates_dl.row(0), b.rates_dl.row(0));
    }

    #[test]
    fn bad_requests() {
        assert_eq!(load_testcase(7, None), Err(TestcaseError::UnknownCase(7)));
        assert!(load_testcase(3, Some("b")).is_err());
        assert!(load_testcase(6, Some("c")).is_err());
    }

    #[test]
    fn settings() {
        assert_eq!(load_testcase(2, None).unwrap().params.formula, AllocationFormula::Original);
        assert_eq!(load_testcase(4, None).unwrap().params.formula, AllocationFormula::Modified);
        let p = load_testcase(3, None).unwrap().initial_prices();
        assert_eq!(p.station_dl, vec![TESTCASE_STATION_PRICE; 3]);
    }
}
