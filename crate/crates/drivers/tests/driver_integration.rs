//! End-to-end driver tests against the device emulators: live streaming,
//! byte-replay indistinguishability, transport transparency, and link
//! recovery.

use dtp_core::bus::{Bus, Envelope};
use dtp_core::measure::{GpsFix, ImuSample, LidarScan};
use dtp_core::time::{Timestamp, VirtualClock};
use dtp_drivers::{DriverConfig, GpsDriver, ImuDriver, LidarDriver};
use dtp_emulators::{GpsEmulator, GroundTruthSource, ImuEmulator, LidarEmulator};
use dtp_replay::{ChannelDef, Direction, LogFile, LogHeader, LogRecord, Replayer};
use dtp_scenario::{Scenario, ScenarioConfig, VehicleConfig, Waypoint, WorldConfig};
use dtp_transport::{settle_pair, ConnectionString, Endpoint, FaultSpec, Role};
use std::sync::{Arc, Mutex};
use std::time::Duration;

fn scenario_config() -> ScenarioConfig {
    ScenarioConfig {
        seed: 42,
        tick_dt: 0.005,
        duration: 10.0,
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
                x: 30.0,
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

fn mem_pair(name: &str, clock: &VirtualClock) -> (Endpoint, Endpoint, ConnectionString) {
    let cs: ConnectionString = format!("mem://{name}").parse().unwrap();
    let device = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
    let driver = Endpoint::open(&cs, Role::Connect, clock.clone()).unwrap();
    (device, driver, cs)
}

fn tick(clock: &VirtualClock, w: &Arc<Mutex<Scenario>>) -> Timestamp {
    clock.advance(Duration::from_millis(5)).unwrap();
    let now = clock.now();
    w.lock().unwrap().step_to(now);
    now
}

#[test]
fn gps_live_round_trip_matches_truth_within_encoding_precision() {
    let clock = VirtualClock::new_virtual();
    let bus = Bus::new();
    let sub = bus.subscribe("sensors/gps/fix").unwrap();
    let (device, driver_ep, cs) = mem_pair("gps-e2e", &clock);
    let cfg = scenario_config();
    let w = world(&cfg);
    let mut emu = GpsEmulator::new(device, 10.0, cfg.noise.clone(), cfg.seed);
    emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
    emu.start(clock.now()).unwrap();
    let mut driver =
        GpsDriver::from_endpoint(&bus, driver_ep, &DriverConfig::new(cs, 10.0, "sensors"))
            .unwrap();

    // Truth must be sampled in the same tick the fix is emitted — the
    // vehicle is moving, so a post-run resample would describe a later pose.
    let mut checked = 0usize;
    let arcmin4 = 0.5e-4 / 60.0 + 1e-12;
    for _ in 0..400 {
        let now = tick(&clock, &w);
        emu.poll(now).unwrap();
        driver.poll(now).unwrap();
        for env in sub.drain() {
            let f = GpsFix::from_payload(&env.payload).unwrap();
            assert_eq!(f.time, now, "fix carries its emission time");
            let truth = w.lock().unwrap().sample_gps(now).unwrap();
            // Encoding quantum: 1e-4 arcminute on angles, 1 mm on altitude,
            // 0.001 knot on speed, 0.01 degree on course.
            assert!((f.position.latitude_deg - truth.position.latitude_deg).abs() < arcmin4);
            assert!((f.position.longitude_deg - truth.position.longitude_deg).abs() < arcmin4);
            assert!((f.position.altitude_m - truth.position.altitude_m).abs() < 6e-4);
            assert!((f.speed_mps - truth.speed_mps).abs() < 6e-4);
            assert!((f.course_deg - truth.course_deg).abs() < 6e-3);
            assert_eq!((f.quality, f.satellites), (truth.quality, truth.satellites));
            checked += 1;
        }
    }
    assert_eq!(checked, 20, "10 Hz over 2 s");
    assert_eq!(driver.diagnostics().frames_ok, 40, "two sentences per fix");
    assert_eq!(driver.diagnostics().frames_dropped, 0);
}

#[test]
fn imu_live_stream_decodes_at_rate() {
    let clock = VirtualClock::new_virtual();
    let bus = Bus::new();
    let sub = bus.subscribe("sensors/imu/sample").unwrap();
    let (device, driver_ep, cs) = mem_pair("imu-e2e", &clock);
    let cfg = scenario_config();
    let w = world(&cfg);
    let mut emu = ImuEmulator::new(device, 100.0, cfg.noise.clone(), cfg.seed);
    emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
    emu.start(clock.now()).unwrap();
    let mut driver =
        ImuDriver::from_endpoint(&bus, driver_ep, &DriverConfig::new(cs, 100.0, "sensors"))
            .unwrap();

    for _ in 0..100 {
        let now = tick(&clock, &w);
        emu.poll(now).unwrap();
        driver.poll(now).unwrap();
    }

    let samples: Vec<ImuSample> = sub
        .drain()
        .iter()
        .map(|e| ImuSample::from_payload(&e.payload).unwrap())
        .collect();
    assert_eq!(samples.len(), 50, "100 Hz over 0.5 s");
    for (i, s) in samples.iter().enumerate() {
        assert_eq!(s.time, Timestamp::from_millis(10 * (i as u64 + 1)));
    }
    assert_eq!(driver.diagnostics().frames_ok, 50);
}

/// The headline property: a driver cannot tell a live emulator from a
/// replayed byte log. Same seed → byte-identical stream → identical
/// published envelopes (topics, sequence numbers, times, payloads).
#[test]
fn replayed_byte_log_is_indistinguishable_from_live_emulator() {
    // Live leg, with measurement noise on so the bytes are nontrivial.
    let mut cfg = scenario_config();
    cfg.noise.gps_horizontal_sigma_m = 0.8;
    let recorded: Arc<Mutex<Vec<(Timestamp, Vec<u8>)>>> = Arc::new(Mutex::new(Vec::new()));

    let clock = VirtualClock::new_virtual();
    let bus = Bus::new();
    let sub = bus.subscribe("sensors/*").unwrap();
    let diag_sub = bus.subscribe("diagnostics/*").unwrap();
    let (device, driver_ep, cs) = mem_pair("gps-indist-live", &clock);
    let rec = recorded.clone();
    driver_ep.set_rx_tap(move |t, bytes| rec.lock().unwrap().push((t, bytes.to_vec())));
    let w = world(&cfg);
    let mut emu = GpsEmulator::new(device, 10.0, cfg.noise.clone(), cfg.seed);
    emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
    emu.start(clock.now()).unwrap();
    let mut driver = GpsDriver::from_endpoint(
        &bus,
        driver_ep,
        &DriverConfig::new(cs, 10.0, "sensors"),
    )
    .unwrap();
    for _ in 0..300 {
        let now = tick(&clock, &w);
        emu.poll(now).unwrap();
        driver.poll(now).unwrap();
    }
    let live_envelopes: Vec<Envelope> = sub.drain();
    let live_diag: Vec<Envelope> = diag_sub.drain();
    assert!(!live_envelopes.is_empty());

    // Replay leg: a fresh world-free emulator re-emits the recorded bytes.
    let log = LogFile {
        header: LogHeader::new(vec![ChannelDef {
            id: 1,
            name: "gps-raw".into(),
        }])
        .unwrap(),
        records: recorded
            .lock()
            .unwrap()
            .iter()
            .map(|(t, payload)| LogRecord {
                t: *t,
                channel: 1,
                direction: Direction::FromDevice,
                payload: payload.clone(),
            })
            .collect(),
        partial: false,
    };
    let clock2 = VirtualClock::new_virtual();
    let bus2 = Bus::new();
    let sub2 = bus2.subscribe("sensors/*").unwrap();
    let diag_sub2 = bus2.subscribe("diagnostics/*").unwrap();
    let (device2, driver_ep2, cs2) = mem_pair("gps-indist-replay", &clock2);
    let mut emu2 = GpsEmulator::new(device2, 10.0, Default::default(), 0);
    emu2.attach_source(GroundTruthSource::Replay(Replayer::new(log))).unwrap();
    emu2.start(clock2.now()).unwrap();
    let mut driver2 = GpsDriver::from_endpoint(
        &bus2,
        driver_ep2,
        &DriverConfig::new(cs2, 10.0, "sensors"),
    )
    .unwrap();
    for _ in 0..300 {
        clock2.advance(Duration::from_millis(5)).unwrap();
        let now = clock2.now();
        emu2.poll(now).unwrap();
        driver2.poll(now).unwrap();
    }

    assert_eq!(live_envelopes, sub2.drain(), "published fixes must be identical");
    assert_eq!(live_diag, diag_sub2.drain(), "diagnostics must be identical");
    assert_eq!(driver.diagnostics(), driver2.diagnostics());
}

/// The same byte script must produce the same published envelopes over
/// shared memory, TCP, and a pseudo terminal.
#[test]
fn transport_transparency_for_the_nmea_script() {
    let gga = "$GPGGA,120000.10,5419.3980,N,01000.0000,E,1,12,0.8,2.500,M,0.0,M,,*58\r\n";
    let rmc = "$GPRMC,120000.10,A,5419.3980,N,01000.0000,E,1.944,90.00,150623,,,A*54\r\n";
    let gga2 = "$GPGGA,120000.20,5419.3981,N,01000.0001,E,1,12,0.8,2.501,M,0.0,M,,*5A\r\n";
    let rmc2 = "$GPRMC,120000.20,A,5419.3981,N,01000.0001,E,1.945,90.10,150623,,,A*57\r\n";
    let mut script = Vec::new();
    script.extend_from_slice(gga.as_bytes());
    script.extend_from_slice(b"line noise, not a sentence\r\n");
    script.extend_from_slice(rmc.as_bytes());
    script.extend_from_slice(gga2.as_bytes());
    script.extend_from_slice(rmc2.as_bytes());
    script.extend_from_slice(b"$GPGGA,trailing partial");

    let run = |device: Endpoint, driver_ep: Endpoint, cs: ConnectionString, clock: VirtualClock| {
        let bus = Bus::new();
        let sub = bus.subscribe("sensors/*").unwrap();
        let diag = bus.subscribe("diagnostics/*").unwrap();
        let mut driver =
            GpsDriver::from_endpoint(&bus, driver_ep, &DriverConfig::new(cs, 10.0, "sensors"))
                .unwrap();
        settle_pair(&device, driver.endpoint(), Duration::from_secs(2)).unwrap();
        device.write(&script).unwrap();
        settle_pair(&device, driver.endpoint(), Duration::from_secs(2)).unwrap();
        clock.advance(Duration::from_millis(5)).unwrap();
        driver.poll(clock.now()).unwrap();
        let d = driver.diagnostics().clone();
        (sub.drain(), diag.drain(), d)
    };

    let mem = {
        let clock = VirtualClock::new_virtual();
        let (device, driver_ep, cs) = mem_pair("gps-transparency", &clock);
        run(device, driver_ep, cs, clock)
    };
    let tcp = {
        let clock = VirtualClock::new_virtual();
        let cs: ConnectionString = "tcp://127.0.0.1:0".parse().unwrap();
        let device = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        let connect_cs: ConnectionString =
            format!("tcp://{}", device.local_address()).parse().unwrap();
        let driver_ep = Endpoint::open(&connect_cs, Role::Connect, clock.clone()).unwrap();
        run(device, driver_ep, connect_cs, clock)
    };
    let pty = {
        let clock = VirtualClock::new_virtual();
        let link = std::env::temp_dir().join(format!("ttyDTP-gps-{}", std::process::id()));
        let cs: ConnectionString = format!("pty://{}", link.display()).parse().unwrap();
        let device = Endpoint::open(&cs, Role::Listen, clock.clone()).unwrap();
        let driver_ep = Endpoint::open(&cs, Role::Connect, clock.clone()).unwrap();
        run(device, driver_ep, cs, clock)
    };

    assert_eq!(mem.0.len(), 2, "two complete epochs in the script");
    assert_eq!(mem, tcp, "mem vs tcp");
    assert_eq!(mem, pty, "mem vs pty");
    assert_eq!(mem.2.frames_ok, 4);
    assert_eq!(mem.2.frames_dropped, 1);
}

#[test]
fn lidar_first_scan_arrives_within_two_periods() {
    let clock = VirtualClock::new_virtual();
    let bus = Bus::new();
    let sub = bus.subscribe("sensors/lidar/scan").unwrap();
    let (device, driver_ep, cs) = mem_pair("lidar-handshake", &clock);
    let cfg = scenario_config();
    let w = world(&cfg);
    let geometry = cfg.rig.lidar.geometry();
    let mut emu = LidarEmulator::new(device, 10.0, geometry, cfg.noise.clone(), cfg.seed);
    emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
    emu.start(clock.now()).unwrap();
    // Driver construction performs the START handshake.
    let mut driver =
        LidarDriver::from_endpoint(&bus, driver_ep, &DriverConfig::new(cs, 10.0, "sensors"))
            .unwrap();

    let mut first_scan_at = None;
    for _ in 0..60 {
        let now = tick(&clock, &w);
        emu.poll(now).unwrap();
        driver.poll(now).unwrap();
        if first_scan_at.is_none() {
            if let Some(env) = sub.try_recv() {
                first_scan_at = Some(env.publish_time);
                let scan = LidarScan::from_payload(&env.payload).unwrap();
                assert_eq!(scan.scan_id, 1);
            }
        }
    }
    let t = first_scan_at.expect("a scan must arrive");
    assert!(
        t.0 <= 200_000_000,
        "first scan after {} ns exceeds two 100 ms periods",
        t.0
    );
}

#[test]
fn lidar_disconnect_reconnects_and_stream_resumes() {
    let clock = VirtualClock::new_virtual();
    let bus = Bus::new();
    let sub = bus.subscribe("sensors/lidar/scan").unwrap();
    let (device, driver_ep, cs) = mem_pair("lidar-reconnect", &clock);
    driver_ep
        .inject_fault(FaultSpec::DisconnectAt {
            at: Timestamp::from_millis(500),
        })
        .unwrap();
    let cfg = scenario_config();
    let w = world(&cfg);
    let geometry = cfg.rig.lidar.geometry();
    let mut emu = LidarEmulator::new(device, 10.0, geometry, cfg.noise.clone(), cfg.seed);
    emu.attach_source(GroundTruthSource::Live(w.clone())).unwrap();
    emu.start(clock.now()).unwrap();
    let mut driver =
        LidarDriver::from_endpoint(&bus, driver_ep, &DriverConfig::new(cs, 10.0, "sensors"))
            .unwrap();

    let mut scans_before_cut = 0usize;
    for step in 0..400 {
        let now = tick(&clock, &w);
        emu.poll(now).unwrap();
        driver.poll(now).unwrap();
        if step == 99 {
            scans_before_cut = sub.len();
            assert!(scans_before_cut >= 3, "stream alive before the cut");
        }
    }
    let total = sub.len();
    assert!(
        total > scans_before_cut + 5,
        "stream must resume after reconnect: {scans_before_cut} then {total}"
    );
    assert_eq!(driver.diagnostics().reconnects, 1);
    assert!(driver.link_is_up());
    assert!(driver.diagnostics().last_error.is_none());
    // Scan ids keep increasing across the outage; nothing is re-published.
    let ids: Vec<u32> = sub
        .drain()
        .iter()
        .map(|e| LidarScan::from_payload(&e.payload).unwrap().scan_id)
        .collect();
    assert!(ids.windows(2).all(|w| w[1] > w[0]), "ids monotone: {ids:?}");
}

/// With no transport faults, every frame the device sent is accounted for:
/// ok + dropped equals frames sent.
#[test]
fn frame_accounting_balances_without_faults() {
    let clock = VirtualClock::new_virtual();
    let bus = Bus::new();
    let (device, driver_ep, cs) = mem_pair("imu-accounting", &clock);
    let mut driver =
        ImuDriver::from_endpoint(&bus, driver_ep, &DriverConfig::new(cs, 100.0, "sensors"))
            .unwrap();

    let mut sent = 0u64;
    for i in 0..40u8 {
        let sample = ImuSample {
            time: Timestamp::from_millis(10 * i as u64),
            accel_mg: [0.0, 0.0, 1000.0],
            gyro_dds: [0.0, 0.0, 0.0],
        };
        let mut frame = dtp_emulators::encode_frame(&sample, i).unwrap();
        if i % 5 == 0 {
            frame[8] ^= 0xFF; // corrupt every fifth frame in flight
        }
        device.write(&frame).unwrap();
        sent += 1;
        clock.advance(Duration::from_millis(10)).unwrap();
        driver.poll(clock.now()).unwrap();
    }
    let d = driver.diagnostics();
    assert_eq!(d.frames_ok + d.frames_dropped, sent);
    assert_eq!(d.frames_dropped, 8);
}
