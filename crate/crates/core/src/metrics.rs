/// Reported in place of infinity for an exact reconstruction.
pub const PSNR_CAP_DB: f64 = 99.99;

/// 8-bit PSNR over `count` samples.
pub fn psnr_from_sse(sse: u64, count: usize) -> f64 {
    psnr_from_mse(sse as f64 / count as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
}
