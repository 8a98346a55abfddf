//! CSV reports: per-factor metric summaries and per-epoch training losses.
//! Header row, `.` decimal separator, `inf` for unbounded PSNR.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub factor: f64,
    pub method: String,
    pub cnr: Option<f64>,
    pub gcnr: Option<f64>,
    pub psnr: f64,
    pub ssim: f64,
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_value).unwrap_or_default()
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("factor,method,cnr,gcnr,psnr,ssim\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            usbf_core::factor_label(r.factor),
            r.method,
            fmt_opt(r.cnr),
            fmt_opt(r.gcnr),
            fmt_value(r.psnr),
            fmt_value(r.ssim),
        );
    }
    out
}

pub fn write_metrics_csv(rows: &[MetricRow], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv(rows))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

pub fn loss_csv(rows: &[LossRow]) -> String {
    let mut out = String::from("epoch,lr,train_loss,val_loss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.9e},{:.12e},{}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.val_loss.map(|v| format!("{v:.12e}")).unwrap_or_default(),
        );
    }
    out
}

pub fn write_loss_csv(rows: &[LossRow], path: &Path) -> Result<()> {
    std::fs::write(path, loss_csv(rows)).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formats_labels_and_infinities() {
        let rows = vec![
            MetricRow {
                factor: 1.0,
                method: "das".into(),
                cnr: Some(1.5),
                gcnr: Some(0.8),
                psnr: f64::INFINITY,
                ssim: 1.0,
            },
            MetricRow {
                factor: 64.0 / 24.0,
                method: "deepbf".into(),
                cnr: None,
                gcnr: None,
                psnr: 24.5,
                ssim: 0.91,
            },
        ];
        let csv = metrics_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "factor,method,cnr,gcnr,psnr,ssim");
        assert_eq!(lines.next().unwrap(), "1,das,1.500000,0.800000,inf,1.000000");
        let l2 = lines.next().unwrap();
        assert!(l2.starts_with("2.7,deepbf,,,24.5"), "{l2}");
    }
}
