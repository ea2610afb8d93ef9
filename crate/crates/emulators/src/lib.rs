//! Device emulators that speak the exact wire protocols of the sensor bar:
//! NMEA-0183 GPS sentences, CRC-framed binary IMU frames, and a
//! command-driven binary LiDAR stream — fed either by the live simulated
//! world or by recorded logs.

pub mod imu;
pub mod lidar;
pub mod nmea;
pub mod runtime;

pub use imu::{encode_frame, saturate_sample, IMU_FRAME_LEN, IMU_PAYLOAD_LEN, IMU_SYNC};
pub use lidar::{
    encode_packet, range_to_wire, LidarEncodeError, CMD_INFO, CMD_START, CMD_STOP, ERR_RESPONSE,
    INFO_RESPONSE, LIDAR_HEADER_LEN, LIDAR_MAGIC,
};
pub use nmea::{encode_fix, format_gga, format_rmc, frame_sentence, NmeaEncodeError, MPS_TO_KNOTS};
pub use runtime::{
    EmulatorError, GpsEmulator, GroundTruthSource, ImuEmulator, LidarEmulator, GPS_NOISE_SALT,
    IMU_NOISE_SALT, LIDAR_NOISE_SALT,
};

#[cfg(test)]
mod tests {
    use super::*;
    use dtp_core::time::{Timestamp, VirtualClock};
    use dtp_replay::{ChannelDef, Direction, LogFile, LogHeader, LogRecord, Replayer};
    use dtp_scenario::{
        HeapBox, Scenario, ScenarioConfig, VehicleConfig, Waypoint, WorldConfig,
    };
    use dtp_transport::{ConnectionString, Endpoint, Role};
    use runtime::GroundTruthSource;
    use std::sync::{Arc, Mutex};
    use std::time::Duration;

    fn scenario_config() -> ScenarioConfig {
        ScenarioConfig {
            seed: 42,
            tick_dt: 0.005,
            duration: 30.0,
            world: WorldConfig {
                origin_lat_deg: 54.0,
                origin_lon_deg: 10.0,
                origin_alt_m: 0.0,
                field_origin_x: -40.0,
                field_origin_y: -40.0,
                cell_size_m: 0.5,
                cells_x: 160,
                cells_y: 160,
                heap: vec![],
                compaction_k: 1.0,
                compaction_floor_fraction: 0.5,
            },
            vehicle: VehicleConfig {
                wheelbase_m: 2.4,
                footprint_length_m: 3.2,
                footprint_width_m: 1.8,
                start_x: 0.0,
                start_y: 0.0,
                start_yaw_deg: 0.0,
                max_steer_deg: 52.0,
                accel_limit_mps2: 1.5,
                capture_radius_m: 0.6,
                waypoints: vec![Waypoint {
                    x: 20.0,
                    y: 0.0,
                    speed: 2.0,
                }],
            },
            noise: Default::default(),
            rig: Default::default(),
        }
    }

    fn world(cfg: &ScenarioConfig) -> Arc<Mutex<Scenario>> {
        Arc::new(Mutex::new(Scenario::new(cfg).unwrap()))
    }

    fn mem_pair(name: &str, clock: &VirtualClock) -> (Endpoint, Endpoint) {
        let cs: ConnectionString = format!("mem://{name}").parse().unwrap();
        let device = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        let driver = Endpoint::open(&cs, Role::Connect, clock.clone()).unwrap();
        (device, driver)
    }

    fn advance(clock: &VirtualClock, ms: u64) {
        clock.advance(Duration::from_millis(ms)).unwrap();
    }

    #[test]
    fn gps_emulator_emits_gga_rmc_pairs_on_schedule() {
        let clock = VirtualClock::new_virtual();
        let (device, driver) = mem_pair("gps-sched", &clock);
        let cfg = scenario_config();
        let w = world(&cfg);
        let mut emu = GpsEmulator::new(device, 10.0, cfg.noise, cfg.seed);
        emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
        emu.start(clock.now()).unwrap();
        for _ in 0..200 {
            advance(&clock, 5);
            let now = clock.now();
            w.lock().unwrap().step_to(now);
            emu.poll(now).unwrap();
        }
        let text = String::from_utf8(driver.read_available()).unwrap();
        let gga: Vec<&str> = text.lines().filter(|l| l.starts_with("$GPGGA")).collect();
        let rmc: Vec<&str> = text.lines().filter(|l| l.starts_with("$GPRMC")).collect();
        assert_eq!(gga.len(), 10, "expected 10 Hz over 1 s");
        assert_eq!(rmc.len(), 10);
        // First emission at exactly one period: virtual 100 ms → 120000.10.
        assert!(gga[0].starts_with("$GPGGA,120000.10,"), "{}", gga[0]);
        assert!(gga[9].starts_with("$GPGGA,120001.00,"), "{}", gga[9]);
    }

    #[test]
    fn gps_noise_is_seed_reproducible() {
        let run = |seed: u64| -> Vec<u8> {
            let clock = VirtualClock::new_virtual();
            let (device, driver) = mem_pair(&format!("gps-noise-{seed}-{:p}", &clock), &clock);
            let mut cfg = scenario_config();
            cfg.noise.gps_horizontal_sigma_m = 0.5;
            let w = world(&cfg);
            let mut emu = GpsEmulator::new(device, 10.0, cfg.noise, seed);
            emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
            emu.start(clock.now()).unwrap();
            for _ in 0..100 {
                advance(&clock, 5);
                let now = clock.now();
                w.lock().unwrap().step_to(now);
                emu.poll(now).unwrap();
            }
            driver.read_available()
        };
        let a = run(7);
        let b = run(7);
        let c = run(8);
        assert_eq!(a, b, "same seed must give identical bytes");
        assert_ne!(a, c, "different seed should differ");
    }

    #[test]
    fn imu_emulator_stationary_frame_reads_one_g() {
        let clock = VirtualClock::new_virtual();
        let (device, driver) = mem_pair("imu-1g", &clock);
        let mut cfg = scenario_config();
        cfg.vehicle.waypoints = vec![Waypoint {
            x: 0.0,
            y: 0.0,
            speed: 1.0,
        }];
        let w = world(&cfg);
        let mut emu = ImuEmulator::new(device, 100.0, cfg.noise, cfg.seed);
        emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
        emu.start(clock.now()).unwrap();
        for _ in 0..10 {
            advance(&clock, 5);
            let now = clock.now();
            w.lock().unwrap().step_to(now);
            emu.poll(now).unwrap();
        }
        let bytes = driver.read_available();
        assert_eq!(bytes.len() % IMU_FRAME_LEN, 0);
        assert_eq!(bytes.len() / IMU_FRAME_LEN, 5, "100 Hz over 50 ms");
        let frame = &bytes[0..IMU_FRAME_LEN];
        assert_eq!(&frame[0..2], &[0xAA, 0x55]);
        // Stationary: az = +1 g = 1000 milli-g = E8 03.
        assert_eq!(&frame[12..14], &[0xE8, 0x03]);
        // Sequence counts up from zero.
        assert_eq!(frame[3], 0);
        assert_eq!(bytes[IMU_FRAME_LEN + 3], 1);
    }

    #[test]
    fn lidar_session_commands() {
        let clock = VirtualClock::new_virtual();
        let (device, driver) = mem_pair("lidar-cmd", &clock);
        let cfg = scenario_config();
        let w = world(&cfg);
        let geometry = cfg.rig.lidar.geometry();
        let mut emu = LidarEmulator::new(device, 10.0, geometry, cfg.noise, cfg.seed);
        emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
        emu.start(clock.now()).unwrap();

        driver.write(b"INFO\n").unwrap();
        emu.poll(clock.now()).unwrap();
        assert_eq!(driver.read_available(), INFO_RESPONSE.as_bytes());

        driver.write(b"SELFDESTRUCT\n").unwrap();
        emu.poll(clock.now()).unwrap();
        assert_eq!(driver.read_available(), ERR_RESPONSE.as_bytes());

        // No packets before START.
        for _ in 0..40 {
            advance(&clock, 5);
            let now = clock.now();
            w.lock().unwrap().step_to(now);
            emu.poll(now).unwrap();
        }
        assert!(driver.read_available().is_empty());

        driver.write(b"START\n").unwrap();
        let start_t = clock.now();
        emu.poll(start_t).unwrap();
        for _ in 0..60 {
            advance(&clock, 5);
            let now = clock.now();
            w.lock().unwrap().step_to(now);
            emu.poll(now).unwrap();
        }
        let bytes = driver.read_available();
        let per_packet = LIDAR_HEADER_LEN + 2 * geometry.beam_count as usize + 2;
        assert_eq!(bytes.len() % per_packet, 0);
        assert_eq!(bytes.len() / per_packet, 3, "10 Hz over 300 ms");
        assert_eq!(&bytes[0..4], b"LDTP");
        // First packet scheduled one period after START.
        let t_ns = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        assert_eq!(t_ns, start_t.0 + 100_000_000);

        driver.write(b"STOP\n").unwrap();
        emu.poll(clock.now()).unwrap();
        for _ in 0..40 {
            advance(&clock, 5);
            let now = clock.now();
            w.lock().unwrap().step_to(now);
            emu.poll(now).unwrap();
        }
        assert!(driver.read_available().is_empty(), "packets after STOP");
    }

    #[test]
    fn lidar_live_ranges_match_raycast_truth_with_zero_noise() {
        let clock = VirtualClock::new_virtual();
        let (device, driver) = mem_pair("lidar-truth", &clock);
        let cfg = scenario_config();
        let w = world(&cfg);
        let geometry = cfg.rig.lidar.geometry();
        let mut emu = LidarEmulator::new(device, 10.0, geometry, cfg.noise, cfg.seed);
        emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
        emu.start(clock.now()).unwrap();
        driver.write(b"START\n").unwrap();
        emu.poll(clock.now()).unwrap();
        for _ in 0..20 {
            advance(&clock, 5);
            let now = clock.now();
            w.lock().unwrap().step_to(now);
            emu.poll(now).unwrap();
        }
        let bytes = driver.read_available();
        let n = geometry.beam_count as usize;
        let truth = w
            .lock()
            .unwrap()
            .sample_lidar(Timestamp::from_millis(100))
            .unwrap();
        for (i, tr) in truth.iter().enumerate() {
            let off = LIDAR_HEADER_LEN + 2 * i;
            let wire = u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap());
            let expect = range_to_wire(*tr, geometry.max_range_m);
            assert_eq!(wire, expect, "beam {i} of {n}");
        }
    }

    #[test]
    fn lidar_noise_stays_within_four_sigma_of_truth() {
        let clock = VirtualClock::new_virtual();
        let (device, driver) = mem_pair("lidar-noise", &clock);
        let mut cfg = scenario_config();
        cfg.noise.lidar_range_sigma_m = 0.01;
        let w = world(&cfg);
        let geometry = cfg.rig.lidar.geometry();
        let mut emu = LidarEmulator::new(device, 10.0, geometry, cfg.noise, cfg.seed);
        emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
        emu.start(clock.now()).unwrap();
        driver.write(b"START\n").unwrap();
        emu.poll(clock.now()).unwrap();
        for _ in 0..20 {
            advance(&clock, 5);
            let now = clock.now();
            w.lock().unwrap().step_to(now);
            emu.poll(now).unwrap();
        }
        let bytes = driver.read_available();
        let truth = w
            .lock()
            .unwrap()
            .sample_lidar(Timestamp::from_millis(100))
            .unwrap();
        let mut checked = 0;
        for (i, tr) in truth.iter().enumerate() {
            if *tr > geometry.max_range_m {
                continue;
            }
            let off = LIDAR_HEADER_LEN + 2 * i;
            let wire = u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap());
            if wire == 0 {
                continue; // jitter pushed it past max range
            }
            let got_m = wire as f64 / 1000.0;
            assert!(
                (got_m - tr).abs() < 4.0 * 0.01 + 0.001,
                "beam {i}: {got_m} vs truth {tr}"
            );
            checked += 1;
        }
        assert!(checked > 50, "too few live beams checked: {checked}");
    }

    #[test]
    fn replay_source_reemits_logged_bytes_verbatim() {
        let clock = VirtualClock::new_virtual();
        let (device, driver) = mem_pair("gps-replay", &clock);
        let payload_a = b"$GPGGA,junk*00\r\n".to_vec();
        let payload_b = b"$GPRMC,junk*00\r\n".to_vec();
        let log = LogFile {
            header: LogHeader::new(vec![ChannelDef {
                id: 1,
                name: "gps".into(),
            }])
            .unwrap(),
            records: vec![
                LogRecord {
                    t: Timestamp::from_millis(100),
                    channel: 1,
                    direction: Direction::FromDevice,
                    payload: payload_a.clone(),
                },
                LogRecord {
                    t: Timestamp::from_millis(150),
                    channel: 1,
                    direction: Direction::ToDevice,
                    payload: b"ignored".to_vec(),
                },
                LogRecord {
                    t: Timestamp::from_millis(200),
                    channel: 1,
                    direction: Direction::FromDevice,
                    payload: payload_b.clone(),
                },
            ],
            partial: false,
        };
        let mut emu = GpsEmulator::new(device, 10.0, Default::default(), 0);
        emu.attach_source(GroundTruthSource::Replay(Replayer::new(log))).unwrap();
        emu.start(clock.now()).unwrap();

        advance(&clock, 99);
        emu.poll(clock.now()).unwrap();
        assert!(driver.read_available().is_empty(), "emitted early");
        advance(&clock, 1);
        emu.poll(clock.now()).unwrap();
        assert_eq!(driver.read_available(), payload_a);
        advance(&clock, 100);
        emu.poll(clock.now()).unwrap();
        // Only from-device bytes re-emitted; to-device record skipped.
        assert_eq!(driver.read_available(), payload_b);
    }

    #[test]
    fn source_switch_while_running_is_rejected() {
        let clock = VirtualClock::new_virtual();
        let (device, _driver) = mem_pair("gps-switch", &clock);
        let cfg = scenario_config();
        let w = world(&cfg);
        let mut emu = GpsEmulator::new(device, 10.0, cfg.noise, cfg.seed);
        emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
        emu.start(clock.now()).unwrap();
        let err = emu.attach_source(GroundTruthSource::Live(w)).unwrap_err();
        assert!(matches!(err, EmulatorError::SourceSwitchWhileRunning));
        emu.stop();
        let cfg2 = scenario_config();
        emu.attach_source(GroundTruthSource::Live(world(&cfg2))).unwrap();
    }

    #[test]
    fn start_without_source_is_rejected() {
        let clock = VirtualClock::new_virtual();
        let (device, _driver) = mem_pair("gps-nosrc", &clock);
        let mut emu = GpsEmulator::new(device, 10.0, Default::default(), 0);
        assert!(matches!(
            emu.start(clock.now()),
            Err(EmulatorError::NoSource)
        ));
    }

    #[test]
    fn imu_saturates_on_extreme_terrain_steps() {
        // Drive over a tall wall: the z second-difference spikes far past
        // the i16 span; the emulator must clip, not fail.
        let clock = VirtualClock::new_virtual();
        let (device, driver) = mem_pair("imu-sat", &clock);
        let mut cfg = scenario_config();
        cfg.world.heap = vec![HeapBox {
            x0: 3.0,
            y0: -5.0,
            x1: 12.0,
            y1: 5.0,
            height: 4.0,
            min_height: 0.0,
        }];
        let w = world(&cfg);
        let mut emu = ImuEmulator::new(device, 100.0, cfg.noise, cfg.seed);
        emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
        emu.start(clock.now()).unwrap();
        for _ in 0..1000 {
            advance(&clock, 5);
            let now = clock.now();
            w.lock().unwrap().step_to(now);
            emu.poll(now).unwrap();
        }
        let bytes = driver.read_available();
        assert_eq!(bytes.len() / IMU_FRAME_LEN, 500);
        // The sampler sees the 4 m step either as the newest history entry
        // (positive spike) or the middle one (negative spike) depending on
        // which tick the crossing lands on; either way one rail must be hit.
        let mut max_az = i16::MIN;
        let mut min_az = i16::MAX;
        for f in bytes.chunks_exact(IMU_FRAME_LEN) {
            let az = i16::from_le_bytes([f[12], f[13]]);
            max_az = max_az.max(az);
            min_az = min_az.min(az);
        }
        assert!(
            max_az == i16::MAX || min_az == i16::MIN,
            "wall climb should rail the ADC, got [{min_az}, {max_az}]"
        );
    }
}
