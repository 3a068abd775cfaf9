#![no_main]

use coexsim::sweep::Matrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let Ok(m) = Matrix::parse(src) else { return };
    let n = m.axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()));
    if let Some(n) = n.filter(|&n| n <= 4096) {
        let cells = m.cells();
        assert_eq!(cells.len(), if m.axes.is_empty() { 0 } else { n });
        assert!(cells.iter().all(|c| c.len() == m.axes.len()));
    }
});
