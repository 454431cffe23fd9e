use super::EfficiencyParams;
use crate::ingest::{CartSession, TrayCountRecord};

/// Running median over a centered window, truncated at the ends.
pub fn median_filter(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    let mut buf = Vec::with_capacity(window);
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            buf.clear();
            buf.extend_from_slice(&values[lo..hi]);
            buf.sort_by(f64::total_cmp);
            let m = buf.len();
            if m % 2 == 1 {
                buf[m / 2]
            } else {
                0.5 * (buf[m / 2 - 1] + buf[m / 2])
            }
        })
        .collect()
}

/// Counts full-to-empty mass drops in the filtered signal.
///
/// A drop is counted when the filtered mass, having reached `full_thresh`,
/// stays at or below `empty_thresh` for `sustain_s` seconds.
pub fn detect_trays(mass: &[f64], rate: f64, params: &EfficiencyParams) -> u32 {
    let filtered = median_filter(mass, params.median_window);
    let sustain = (params.sustain_s * rate).ceil().max(1.0) as usize;
    let mut armed = false;
    let mut low_run = 0usize;
    let mut count = 0;
    for &m in &filtered {
        if m >= params.full_thresh {
            armed = true;
            low_run = 0;
        } else if m <= params.empty_thresh {
            low_run += 1;
            if armed && low_run >= sustain {
                count += 1;
                armed = false;
            }
        } else {
            low_run = 0;
        }
    }
    count
}

/// The tray-count record when present, otherwise the mass-drop detector.
pub fn count_trays(session: &CartSession, record: Option<&TrayCountRecord>, params: &EfficiencyParams) -> u32 {
    if let Some(r) = record {
        return r.tray_count;
    }
    let mass: Vec<f64> = session.samples.iter().map(|s| s.raw_mass).collect();
    detect_trays(&mass, session.nominal_rate, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{HarvestDate, SessionId, TelemetrySample};

    fn sawtooth(trays: usize) -> Vec<f64> {
        let mut m = vec![0.0; 50];
        for _ in 0..trays {
            m.extend((0..600).map(|i| 0.7 + 4.5 * i as f64 / 599.0));
            m.extend(vec![0.02; 80]);
        }
        m
    }

    #[test]
    fn counts_sawtooth_teeth() {
        assert_eq!(detect_trays(&sawtooth(8), 10.0, &EfficiencyParams::default()), 8);
    }

    #[test]
    fn monotone_ramp_has_no_trays() {
        let m: Vec<f64> = (0..1000).map(|i| i as f64 * 0.01).collect();
        assert_eq!(detect_trays(&m, 10.0, &EfficiencyParams::default()), 0);
    }

    #[test]
    fn brief_dropout_ignored() {
        let mut m = vec![5.0; 200];
        // 2 s of zeros is below the 3 s sustain and is also wider than the median window.
        m.extend(vec![0.0; 20]);
        m.extend(vec![5.0; 200]);
        assert_eq!(detect_trays(&m, 10.0, &EfficiencyParams::default()), 0);
        // Single-sample spikes vanish in the median filter.
        let mut spiky = sawtooth(2);
        spiky[100] = 12.0;
        spiky[700] = 0.0;
        assert_eq!(detect_trays(&spiky, 10.0, &EfficiencyParams::default()), 2);
    }

    #[test]
    fn record_is_authoritative() {
        let samples = sawtooth(3)
            .into_iter()
            .enumerate()
            .map(|(i, m)| TelemetrySample {
                gps_tow: 100 * i as i64,
                easting: 0.0,
                northing: 0.0,
                ax: 0.0,
                ay: 0.0,
                az: 9.81,
                raw_mass: m,
                activity: None,
            })
            .collect();
        let s = CartSession::new(SessionId::new("4-10-24_1"), samples);
        let p = EfficiencyParams::default();
        assert_eq!(count_trays(&s, None, &p), 3);
        let rec = TrayCountRecord { harvest_date: HarvestDate::parse("4-10-24").unwrap(), cart_id: "1".into(), tray_count: 41 };
        assert_eq!(count_trays(&s, Some(&rec), &p), 41);
    }

    #[test]
    fn median_of_constant_is_constant() {
        assert_eq!(median_filter(&[2.0; 7], 5), vec![2.0; 7]);
        assert_eq!(median_filter(&[1.0, 9.0, 1.0, 1.0], 3), vec![5.0, 1.0, 1.0, 1.0]);
    }
}
