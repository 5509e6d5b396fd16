//! Level frequencies over one cycle of the flux protocol.

use qotto::params::EngineConfig;
use qotto::transmon::spectrum;

fn main() -> qotto::Result<()> {
    let cfg = EngineConfig::calibrated(1);
    let samples = spectrum(&cfg.device, &cfg.schedule, 25.0)?;
    let mut out = std::io::stdout().lock();
    qotto::transmon::write_spectrum_csv(&mut out, &samples)?;
    Ok(())
}
