//! Per-trial record dumps.

use std::fmt::Write as _;

use super::episode::TransmissionRecord;
use super::metrics::fmt_sig;

/// List columns hold one entry per block, separated by `;`. A block without
/// a report leaves its entry empty.
pub const RECORD_HEADER: &str =
    "trial,seed,mse,psnr_db,cbr_actual,avg_snr_hat_db,effective_snr_db,feedback_snr_db,cqi,erasures";

fn join<T>(xs: &[T], f: impl Fn(&T) -> String) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(";")
}

pub fn records_to_csv(records: &[TransmissionRecord]) -> String {
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{}",
            r.seed,
            fmt_sig(r.mse, 9),
            fmt_sig(r.psnr_db, 9),
            fmt_sig(r.cbr_actual, 9),
            fmt_sig(r.avg_snr_hat_db, 9),
            join(&r.effective_snr_db, |x| fmt_sig(*x, 9)),
            join(&r.feedback_snr_db, |x| x.map(|v| fmt_sig(v, 9)).unwrap_or_default()),
            join(&r.cqi, |x| x.map(|v| v.to_string()).unwrap_or_default()),
            join(&r.erasures, usize::to_string),
        );
    }
    out
}
