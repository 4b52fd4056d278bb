use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn main() {
    let mut a = ChaCha8Rng::seed_from_u64(7);
    print!("u64s:");
    for _ in 0..6 {
        print!(" {:016x}", a.next_u64());
    }
    println!();
    let mut b = ChaCha8Rng::seed_from_u64(7);
    print!("u32s:");
    for _ in 0..12 {
        print!(" {:08x}", b.next_u32());
    }
    println!();
    let mut c = ChaCha8Rng::from_seed([0u8; 32]);
    print!("zero-key u32s:");
    for _ in 0..4 {
        print!(" {:08x}", c.next_u32());
    }
    println!();
}
