use crate::corpus::Channel;
use crate::dsp::{
    detrend, population_sd, iir_filter, notch_filter, rms_envelope, savgol_smooth, zscore, FilterSpec, Signal, Sos,
};

use super::Result;

/// EMG envelope: mains notches, 5-250 Hz bandpass, detrend, z-score, 100 ms
/// RMS, then a 1 s cubic Savitzky-Golay pass floored at zero.
pub fn clean_emg(raw: &Signal) -> Result<Signal> {
    let mut x = raw.clone();
    for f0 in [60.0, 120.0, 180.0, 240.0] {
        x = notch_filter(&x, f0, 3.0)?;
    }
    x = iir_filter(&x, &FilterSpec::bandpass(5.0, 250.0, 4))?;
    x = detrend(&x);
    // a residual far below the input's own spread is filter leakage, not
    // muscle activity; z-scoring it would inflate it to unit variance
    let floor = 1e-2 * population_sd(detrend(raw).samples());
    x = if population_sd(x.samples()) < floor {
        let scaled: Vec<f64> = x.samples().iter().map(|v| v / floor).collect();
        Signal::new(scaled, raw.sample_rate())?
    } else {
        zscore(&x)
    };
    x = rms_envelope(&x, 0.1)?;
    let smooth = savgol_smooth(&x, 3, 1.0)?;
    let floored: Vec<f64> = smooth.samples().iter().map(|v| v.max(0.0)).collect();
    Ok(Signal::new(floored, raw.sample_rate())?)
}

pub(crate) fn eda_tonic_filter(sample_rate: f64) -> Result<Sos> {
    Ok(Sos::butterworth(&FilterSpec::lowpass(0.05, 2), sample_rate)?)
}

pub(crate) fn decompose_with(sos: &Sos, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    // filter around the first sample; the lowpass has unit DC gain, and this
    // keeps a constant input exactly constant
    let x0 = x[0];
    let centred: Vec<f64> = x.iter().map(|v| v - x0).collect();
    let tonic: Vec<f64> = sos.filtfilt(&centred)?.into_iter().map(|v| v + x0).collect();
    let phasic = x.iter().zip(&tonic).map(|(a, b)| a - b).collect();
    Ok((tonic, phasic))
}

/// Splits cleaned skin conductance into a 0.05 Hz lowpass tonic level and the
/// phasic residual, so `tonic + phasic` reproduces the input.
pub fn eda_decompose(clean: &Signal) -> Result<(Signal, Signal)> {
    let sos = eda_tonic_filter(clean.sample_rate())?;
    let (tonic, phasic) = decompose_with(&sos, clean.samples())?;
    Ok((
        Signal::new(tonic, clean.sample_rate())?,
        Signal::new(phasic, clean.sample_rate())?,
    ))
}

/// Per-channel cleaning. EMG channels become their envelopes; skin
/// temperature passes through unchanged.
pub fn clean_channel(channel: Channel, raw: &Signal) -> Result<Signal> {
    let spec = match channel {
        Channel::Ecg => FilterSpec::bandpass(0.5, 40.0, 4),
        Channel::Bvp => FilterSpec::bandpass(0.5, 8.0, 3),
        Channel::Gsr => FilterSpec::lowpass(3.0, 4),
        Channel::Rsp => FilterSpec::bandpass(0.05, 3.0, 2),
        Channel::Skt => return Ok(raw.clone()),
        Channel::EmgZygo | Channel::EmgCoru | Channel::EmgTrap => return clean_emg(raw),
    };
    Ok(iir_filter(raw, &spec)?)
}
