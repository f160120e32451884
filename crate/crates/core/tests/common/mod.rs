//! Synthetic connection records in the NSL-KDD text format.
//!
//! Each attack family gets a rough caricature of its real traffic profile
//! (SYN floods with S0 flags and high serror rates, ICMP echo bursts, port
//! scans with REJ flags, password guessing with failed logins, ...), so the
//! whole pipeline can run end to end without the real files.

#![allow(dead_code)]

pub mod gradcheck;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (label, weight) for the training split.
const TRAIN_MIX: &[(&str, f64)] = &[
    ("normal", 53.0),
    ("neptune", 20.0),
    ("smurf", 8.0),
    ("back", 3.0),
    ("teardrop", 2.0),
    ("satan", 4.0),
    ("ipsweep", 3.0),
    ("portsweep", 3.0),
    ("guess_passwd", 1.5),
    ("warezclient", 1.5),
    ("buffer_overflow", 0.5),
];

/// Test split: adds attacks that never occur in training.
const TEST_MIX: &[(&str, f64)] = &[
    ("normal", 43.0),
    ("neptune", 20.0),
    ("smurf", 6.0),
    ("back", 3.0),
    ("satan", 5.0),
    ("ipsweep", 3.0),
    ("nmap", 2.0),
    ("guess_passwd", 6.0),
    ("warezmaster", 4.0),
    ("rootkit", 1.0),
    ("apache2", 4.0),
    ("mscan", 3.0),
];

const NORMAL_SERVICES: &[(&str, &str)] = &[
    ("tcp", "http"),
    ("tcp", "http"),
    ("tcp", "smtp"),
    ("tcp", "ftp_data"),
    ("udp", "domain_u"),
    ("udp", "private"),
    ("tcp", "telnet"),
    ("tcp", "finger"),
    ("udp", "ntp_u"),
    ("icmp", "urp_i"),
];

const SCAN_SERVICES: &[&str] = &[
    "private", "other", "http", "ftp", "telnet", "finger", "auth", "imap4",
];

fn weighted<'a>(rng: &mut impl Rng, mix: &'a [(&'a str, f64)]) -> &'a str {
    let total: f64 = mix.iter().map(|m| m.1).sum();
    let mut u = rng.gen::<f64>() * total;
    for (name, w) in mix {
        if u < *w {
            return name;
        }
        u -= w;
    }
    mix[mix.len() - 1].0
}

fn rate(rng: &mut impl Rng, center: f64, spread: f64) -> f64 {
    let v: f64 = center + spread * (rng.gen::<f64>() - 0.5) * 2.0;
    (v.clamp(0.0, 1.0) * 100.0).round() / 100.0
}

fn int(rng: &mut impl Rng, lo: u64, hi: u64) -> f64 {
    rng.gen_range(lo..=hi) as f64
}

/// One record as its 43 text fields.
pub fn record(rng: &mut impl Rng, label: &str) -> String {
    let mut f = [0.0f64; 41];
    let (mut proto, mut service, mut flag) = ("tcp", "private", "SF");
    match label {
        "normal" => {
            let (p, s) = *NORMAL_SERVICES.choose(rng).unwrap();
            proto = p;
            service = s;
            flag = if rng.gen_bool(0.95) {
                "SF"
            } else {
                *["REJ", "S1", "RSTO"].choose(rng).unwrap()
            };
            f[0] = if rng.gen_bool(0.9) {
                0.0
            } else {
                int(rng, 1, 300)
            };
            f[4] = int(rng, 100, 2000);
            f[5] = if proto == "tcp" {
                int(rng, 200, 9000)
            } else {
                int(rng, 40, 400)
            };
            f[9] = if rng.gen_bool(0.05) {
                int(rng, 1, 3)
            } else {
                0.0
            };
            f[11] = if proto == "tcp" { 1.0 } else { 0.0 };
            f[22] = int(rng, 1, 20);
            f[23] = int(rng, 1, 25);
            f[26] = if flag == "REJ" { 1.0 } else { 0.0 };
            f[27] = f[26];
            f[28] = rate(rng, 0.95, 0.05);
            f[29] = rate(rng, 0.02, 0.02);
            f[30] = rate(rng, 0.1, 0.1);
            f[31] = int(rng, 20, 255);
            f[32] = int(rng, 150, 255);
            f[33] = rate(rng, 0.9, 0.1);
            f[34] = rate(rng, 0.02, 0.02);
            f[35] = rate(rng, 0.05, 0.05);
            f[36] = rate(rng, 0.03, 0.03);
        }
        "neptune" => {
            service = *SCAN_SERVICES.choose(rng).unwrap();
            flag = if rng.gen_bool(0.85) { "S0" } else { "REJ" };
            let syn = flag == "S0";
            f[22] = int(rng, 100, 511);
            f[23] = int(rng, 1, 25);
            f[24] = if syn { 1.0 } else { 0.0 };
            f[25] = f[24];
            f[26] = 1.0 - f[24];
            f[27] = f[26];
            f[28] = rate(rng, 0.05, 0.05);
            f[29] = rate(rng, 0.07, 0.03);
            f[31] = 255.0;
            f[32] = int(rng, 1, 25);
            f[33] = rate(rng, 0.05, 0.05);
            f[34] = rate(rng, 0.07, 0.03);
            f[37] = f[24];
            f[38] = f[24];
            f[39] = f[26];
            f[40] = f[26];
        }
        "smurf" => {
            proto = "icmp";
            service = "ecr_i";
            f[4] = if rng.gen_bool(0.8) { 1032.0 } else { 520.0 };
            f[22] = int(rng, 300, 511);
            f[23] = f[22];
            f[28] = 1.0;
            f[31] = 255.0;
            f[32] = 255.0;
            f[33] = 1.0;
            f[35] = 1.0;
        }
        "back" => {
            service = "http";
            f[0] = if rng.gen_bool(0.2) {
                int(rng, 1, 5)
            } else {
                0.0
            };
            f[4] = 54540.0;
            f[5] = int(rng, 7000, 8400);
            f[9] = 2.0;
            f[11] = 1.0;
            f[12] = 1.0;
            f[22] = int(rng, 1, 10);
            f[23] = int(rng, 1, 10);
            f[28] = 1.0;
            f[31] = int(rng, 50, 255);
            f[32] = int(rng, 50, 255);
            f[33] = 1.0;
        }
        "teardrop" => {
            proto = "udp";
            f[4] = 28.0;
            f[7] = 3.0;
            f[22] = int(rng, 1, 100);
            f[23] = f[22];
            f[28] = 1.0;
            f[31] = 255.0;
            f[32] = int(rng, 1, 100);
            f[33] = rate(rng, 0.3, 0.3);
            f[35] = rate(rng, 0.3, 0.3);
        }
        "satan" | "portsweep" | "nmap" | "mscan" => {
            service = *SCAN_SERVICES.choose(rng).unwrap();
            flag = *["REJ", "RSTR", "RSTO", "SH", "S0"].choose(rng).unwrap();
            f[0] = if label == "portsweep" && rng.gen_bool(0.3) {
                int(rng, 1000, 40000)
            } else {
                0.0
            };
            f[22] = int(rng, 1, if label == "satan" { 400 } else { 5 });
            f[23] = int(rng, 1, 5);
            f[26] = rate(rng, 0.8, 0.2);
            f[27] = rate(rng, 0.8, 0.2);
            f[28] = rate(rng, 0.1, 0.1);
            f[29] = rate(rng, 0.6, 0.4);
            f[30] = rate(rng, 0.3, 0.3);
            f[31] = int(rng, 1, 255);
            f[32] = int(rng, 1, 20);
            f[33] = rate(rng, 0.05, 0.05);
            f[34] = rate(rng, 0.6, 0.4);
            f[35] = rate(rng, 0.7, 0.3);
            f[39] = rate(rng, 0.8, 0.2);
            f[40] = rate(rng, 0.8, 0.2);
        }
        "ipsweep" => {
            proto = "icmp";
            service = if rng.gen_bool(0.8) { "eco_i" } else { "ecr_i" };
            f[4] = 8.0 + int(rng, 0, 10);
            f[22] = int(rng, 1, 3);
            f[23] = int(rng, 1, 50);
            f[28] = 1.0;
            f[30] = rate(rng, 0.8, 0.2);
            f[31] = int(rng, 1, 100);
            f[32] = int(rng, 1, 100);
            f[33] = 1.0;
            f[35] = 1.0;
            f[36] = rate(rng, 0.5, 0.5);
        }
        "guess_passwd" => {
            service = if rng.gen_bool(0.9) { "telnet" } else { "ftp" };
            flag = if rng.gen_bool(0.8) { "RSTO" } else { "SF" };
            f[0] = int(rng, 0, 5);
            f[4] = int(rng, 120, 130);
            f[5] = int(rng, 170, 190);
            f[10] = 1.0;
            f[22] = int(rng, 1, 3);
            f[23] = int(rng, 1, 3);
            f[26] = rate(rng, 0.5, 0.5);
            f[28] = 1.0;
            f[31] = int(rng, 1, 255);
            f[32] = int(rng, 1, 10);
            f[33] = rate(rng, 0.1, 0.1);
        }
        "warezclient" | "warezmaster" => {
            service = if rng.gen_bool(0.7) { "ftp_data" } else { "ftp" };
            f[0] = int(rng, 10, 2000);
            f[4] = int(rng, 300, 3000);
            f[5] = if label == "warezmaster" {
                int(rng, 100_000, 900_000)
            } else {
                0.0
            };
            f[9] = int(rng, 1, 30);
            f[11] = 1.0;
            f[21] = 1.0;
            f[22] = int(rng, 1, 4);
            f[23] = int(rng, 1, 4);
            f[28] = 1.0;
            f[31] = int(rng, 1, 30);
            f[32] = int(rng, 1, 30);
            f[33] = rate(rng, 0.6, 0.4);
            f[35] = rate(rng, 0.6, 0.4);
        }
        "buffer_overflow" | "rootkit" => {
            service = "telnet";
            f[0] = int(rng, 20, 200);
            f[4] = int(rng, 1000, 2000);
            f[5] = int(rng, 2000, 9000);
            f[9] = int(rng, 1, 3);
            f[11] = 1.0;
            f[12] = int(rng, 0, 2);
            f[13] = 1.0;
            f[16] = int(rng, 0, 3);
            f[17] = 1.0;
            f[22] = 1.0;
            f[23] = 1.0;
            f[28] = 1.0;
            f[31] = int(rng, 1, 10);
            f[32] = int(rng, 1, 10);
            f[33] = 1.0;
        }
        "apache2" => {
            service = "http";
            flag = *["RSTR", "SF", "S3"].choose(rng).unwrap();
            f[4] = int(rng, 0, 500);
            f[22] = int(rng, 100, 300);
            f[23] = f[22];
            f[28] = 1.0;
            f[31] = 255.0;
            f[32] = 255.0;
            f[33] = 1.0;
        }
        other => panic!("no generator for {other}"),
    }
    // Rare heavy-tailed transfers make some records outliers.
    if rng.gen_bool(0.01) {
        f[4] += int(rng, 1_000_000, 50_000_000);
    }
    let mut line = String::new();
    for (i, v) in f.iter().enumerate() {
        match i {
            1 => line.push_str(proto),
            2 => line.push_str(service),
            3 => line.push_str(flag),
            _ if v.fract() == 0.0 => {
                let _ = write!(line, "{}", *v as i64);
            }
            _ => {
                let _ = write!(line, "{v}");
            }
        }
        line.push(',');
    }
    let _ = write!(line, "{label},{}", rng.gen_range(5..=21));
    line
}

pub fn lines(n: usize, test: bool, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix = if test { TEST_MIX } else { TRAIN_MIX };
    (0..n)
        .map(|_| {
            let label = weighted(&mut rng, mix);
            record(&mut rng, label)
        })
        .collect()
}

/// Writes `KDDTrain+.txt` and `KDDTest+.txt` into `dir`.
pub fn write_dataset(dir: &Path, n_train: usize, n_test: usize, seed: u64) -> (PathBuf, PathBuf) {
    std::fs::create_dir_all(dir).unwrap();
    let train = dir.join("KDDTrain+.txt");
    let test = dir.join("KDDTest+.txt");
    std::fs::write(&train, lines(n_train, false, seed).join("\n") + "\n").unwrap();
    std::fs::write(&test, lines(n_test, true, seed ^ 0x5eed).join("\n") + "\n").unwrap();
    (train, test)
}

/// Small, fast training schedule for synthetic end-to-end runs.
pub fn quick_config(
    dir: &Path,
    model: ids_core::config::ModelKind,
) -> ids_core::config::PipelineConfig {
    let mut cfg = ids_core::config::PipelineConfig::default();
    cfg.train_path = dir.join("KDDTrain+.txt");
    cfg.test_path = dir.join("KDDTest+.txt");
    cfg.out_dir = dir.join("out");
    cfg.model = model;
    cfg.code_sizes = vec![12];
    cfg.mlp_hidden = 12;
    cfg.pretrain_iters = 15;
    cfg.head_iters = 15;
    cfg.finetune_iters = 30;
    cfg
}
