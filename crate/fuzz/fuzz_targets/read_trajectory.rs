#![no_main]

use elastoph_cli::{read_trajectory, write_trajectory};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(loaded) = read_trajectory(data) else {
        return;
    };
    // Anything accepted must survive a write/read cycle byte for byte.
    let mut first = Vec::new();
    write_trajectory(&mut first, &loaded.trajectory).unwrap();
    let again = read_trajectory(first.as_slice()).unwrap();
    let mut second = Vec::new();
    write_trajectory(&mut second, &again.trajectory).unwrap();
    assert_eq!(first, second);
});
