//! End-to-end exercises of the stream-socket transport: handshake, task
//! execution, session isolation, refusal paths, and per-connection ordering.

use std::io::Write;
use std::net::TcpStream;

use edgehand_core::config::{config_digest, geometry_digest};
use edgehand_core::kinematics::{forward_kinematics, render_depth, PoseVector};
use edgehand_core::transport::{
    encode, read_message, serve, write_message, Message, RegisterInfo, ServerHandle, StepRequest,
    TaskKind, TcpRemote, PROTOCOL_VERSION,
};
use edgehand_core::worker::{execute_step, WorkerContext, UNIT_SCALE};

fn small_worker() -> WorkerContext {
    let mut wc = WorkerContext::with_defaults();
    wc.pso.swarm_size = 8;
    wc.pso.generations_total = 4;
    wc
}

fn start_server(wc: &WorkerContext) -> (ServerHandle, std::thread::JoinHandle<()>) {
    let (handle, accept_loop) = serve("127.0.0.1:0", wc.clone()).unwrap();
    let join = std::thread::spawn(move || {
        accept_loop().unwrap();
    });
    (handle, join)
}

fn test_request(wc: &WorkerContext, frame_index: u32) -> StepRequest {
    let mut center = PoseVector::identity();
    center.position = [0.0, 0.0, 0.4];
    center.articulation[4] = 0.2 + frame_index as f64 * 0.01;
    let center = center.quantize_f32();
    let observation = render_depth(
        &forward_kinematics(&center, &wc.geometry).unwrap(),
        &wc.camera,
    );
    StepRequest {
        frame_index,
        kind: TaskKind::FusedFrame,
        phase_index: 0,
        seed: wc.pso.seed,
        center,
        observation,
        swarm_state: None,
    }
}

#[test]
fn ping_register_and_execute() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let addr = handle.local_addr.to_string();

    let mut remote = TcpRemote::connect(&addr, &wc, 5000).unwrap();
    assert!(remote.executor_id > 0);
    let rtt = remote.ping_ms().unwrap();
    assert!((0.0..1000.0).contains(&rtt));

    let req = test_request(&wc, 3);
    let expected = execute_step(&req, &wc, &UNIT_SCALE).unwrap();
    let (res, exchange) = remote.step(req).unwrap();
    assert_eq!(res.frame_index, 3);
    assert_eq!(res.gbest_pose, expected.gbest_pose);
    assert_eq!(res.gbest_score, expected.gbest_score);
    assert!(exchange.request_bytes > 32_000);
    assert!(res.server_exec_us > 0);

    handle.shutdown();
    join.join().unwrap();
}

#[test]
fn self_consistent_fused_request_scores_zero_over_the_wire() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let mut remote = TcpRemote::connect(&handle.local_addr.to_string(), &wc, 5000).unwrap();
    let (res, _) = remote.step(test_request(&wc, 0)).unwrap();
    assert_eq!(res.gbest_score, 0.0);
    handle.shutdown();
    join.join().unwrap();
}

#[test]
fn geometry_mismatch_is_refused() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let mut other = wc.clone();
    other.geometry.palm_width += 0.001;
    let err = TcpRemote::connect(&handle.local_addr.to_string(), &other, 5000).unwrap_err();
    assert!(err.to_string().contains("geometry digest mismatch"), "{err}");
    handle.shutdown();
    join.join().unwrap();
}

#[test]
fn config_mismatch_is_refused() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let mut other = wc.clone();
    other.pso.chi += 0.001;
    let err = TcpRemote::connect(&handle.local_addr.to_string(), &other, 5000).unwrap_err();
    assert!(err.to_string().contains("config digest mismatch"), "{err}");
    handle.shutdown();
    join.join().unwrap();
}

#[test]
fn protocol_version_mismatch_is_refused() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let mut stream = TcpStream::connect(handle.local_addr).unwrap();
    let info = RegisterInfo {
        protocol_version: PROTOCOL_VERSION + 1,
        task_kinds: 0b11,
        geometry_digest: geometry_digest(&wc.geometry, &wc.camera),
        config_digest: config_digest(&wc.objective, &wc.pso),
    };
    write_message(&mut stream, &Message::Register(info)).unwrap();
    match read_message(&mut stream).unwrap() {
        Message::Error { code, message } => {
            assert_eq!(code, 1);
            assert!(message.contains("protocol version"), "{message}");
        }
        other => panic!("expected refusal, got {other:?}"),
    }
    handle.shutdown();
    join.join().unwrap();
}

#[test]
fn step_before_register_is_rejected() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let mut stream = TcpStream::connect(handle.local_addr).unwrap();
    write_message(
        &mut stream,
        &Message::StepRequest(Box::new(test_request(&wc, 0))),
    )
    .unwrap();
    match read_message(&mut stream).unwrap() {
        Message::Error { code, .. } => assert_eq!(code, 2),
        other => panic!("expected error, got {other:?}"),
    }
    handle.shutdown();
    join.join().unwrap();
}

#[test]
fn malformed_stream_gets_error_then_close() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let mut stream = TcpStream::connect(handle.local_addr).unwrap();
    // valid header claiming an unknown type byte
    stream.write_all(&[0, 0, 0, 0, 0x6f]).unwrap();
    match read_message(&mut stream).unwrap() {
        Message::Error { code, .. } => assert_eq!(code, 4),
        other => panic!("expected error, got {other:?}"),
    }
    handle.shutdown();
    join.join().unwrap();
}

#[test]
fn interleaved_sessions_stay_isolated() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let addr = handle.local_addr.to_string();

    let threads: Vec<_> = [11u32, 22u32]
        .into_iter()
        .map(|frame| {
            let wc = wc.clone();
            let addr = addr.clone();
            std::thread::spawn(move || {
                let mut remote = TcpRemote::connect(&addr, &wc, 5000).unwrap();
                for _ in 0..3 {
                    let (res, _) = remote.step(test_request(&wc, frame)).unwrap();
                    assert_eq!(res.frame_index, frame);
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    handle.shutdown();
    join.join().unwrap();
}

#[test]
fn per_connection_results_arrive_in_request_order() {
    let wc = small_worker();
    let (handle, join) = start_server(&wc);
    let mut stream = TcpStream::connect(handle.local_addr).unwrap();
    let info = RegisterInfo {
        protocol_version: PROTOCOL_VERSION,
        task_kinds: 0b11,
        geometry_digest: geometry_digest(&wc.geometry, &wc.camera),
        config_digest: config_digest(&wc.objective, &wc.pso),
    };
    write_message(&mut stream, &Message::Register(info)).unwrap();
    assert!(matches!(
        read_message(&mut stream).unwrap(),
        Message::RegisterAck { .. }
    ));
    // write three requests back to back, then read the replies
    for frame in [7u32, 8, 9] {
        let bytes = encode(&Message::StepRequest(Box::new(test_request(&wc, frame))));
        stream.write_all(&bytes).unwrap();
    }
    for frame in [7u32, 8, 9] {
        match read_message(&mut stream).unwrap() {
            Message::StepResult(res) => assert_eq!(res.frame_index, frame),
            other => panic!("expected result, got {other:?}"),
        }
    }
    handle.shutdown();
    join.join().unwrap();
}
