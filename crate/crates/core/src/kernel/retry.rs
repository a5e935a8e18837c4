use crate::reliability::{OperatingCondition, PageDraw, RetryCalibration};

/// Retry requirement of one page read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RetryDraw {
    pub steps: u32,
    /// The reduced-tPRE chain fails and must be re-run at default timing.
    pub outlier: bool,
    pub clamped: bool,
    pub exhausted: bool,
}

/// Supplies retry-step counts to the kernel.
pub trait RetrySource: Sync {
    fn draw(&self, cond: &OperatingCondition, page_id: u64) -> RetryDraw;
}

/// Draws from the calibrated reliability model.
#[derive(Clone, Copy, Debug)]
pub struct CalibratedRetries<'a> {
    pub calibration: &'a RetryCalibration,
    pub seed: u64,
}

impl RetrySource for CalibratedRetries<'_> {
    fn draw(&self, cond: &OperatingCondition, page_id: u64) -> RetryDraw {
        let draw = PageDraw::new(page_id, self.seed);
        let s = self.calibration.sample_with_draw(cond, draw);
        RetryDraw {
            steps: s.steps,
            outlier: s.steps > 0 && draw.outlier_u < self.calibration.outlier_probability,
            clamped: s.clamped,
            exhausted: s.exhausted,
        }
    }
}

/// Every read needs exactly this many retry steps.
#[derive(Clone, Copy, Debug)]
pub struct FixedRetries(pub u32);

impl RetrySource for FixedRetries {
    fn draw(&self, _cond: &OperatingCondition, _page_id: u64) -> RetryDraw {
        RetryDraw { steps: self.0, ..RetryDraw::default() }
    }
}
