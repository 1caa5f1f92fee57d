//! Returns panel ingestion, trading calendar and 12-1 momentum signals.

mod calendar;
mod panel;
mod signal;

pub use calendar::{Frequency, TradingCalendar};
pub use panel::{save_to_dir, PanelRecord, ReturnPanel, Ticker};
pub use signal::{
    decile_boundary, decile_of, extended_momentum_set, momentum_signal, MomentumSignal, SignalEntry, LOOKBACK_DAYS,
    MIN_COVERAGE, SKIP_DAYS,
};
