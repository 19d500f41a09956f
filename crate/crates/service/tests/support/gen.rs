//! Random protocol messages. Floats are arbitrary bit patterns (NaNs
//! included) so byte-level round trips cover every encoding.

use rand::Rng;
use rfnode_service::protocol::*;

pub const TYPES: [u8; 7] = [
    TYPE_HELLO,
    TYPE_RENDER_REQUEST,
    TYPE_RENDER_STAGE,
    TYPE_CANCEL,
    TYPE_STATS,
    TYPE_FRAME_PUSH,
    TYPE_ERROR,
];

fn f64_bits(rng: &mut impl Rng) -> f64 {
    f64::from_bits(rng.gen())
}

fn f32_bits(rng: &mut impl Rng) -> f32 {
    f32::from_bits(rng.gen())
}

fn bytes(rng: &mut impl Rng, max: usize) -> Vec<u8> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| rng.gen()).collect()
}

fn text(rng: &mut impl Rng, max_chars: usize) -> String {
    let n = rng.gen_range(0..=max_chars);
    (0..n)
        .map(|_| match rng.gen_range(0..3) {
            0 => rng.gen_range('a'..='z'),
            1 => rng.gen_range('\u{00e0}'..='\u{00ff}'),
            _ => rng.gen_range('\u{4e00}'..='\u{4e20}'),
        })
        .collect()
}

pub fn message(rng: &mut impl Rng, type_code: u8) -> Message {
    match type_code {
        TYPE_HELLO => Message::Hello(Hello {
            client_id: rng.gen(),
            role: if rng.gen() { Role::Viewer } else { Role::Sensor },
        }),
        TYPE_RENDER_REQUEST => Message::RenderRequest(RenderRequestMsg {
            request_id: rng.gen(),
            backend: rng.gen(),
            flags: rng.gen_range(0..8),
            pose: std::array::from_fn(|_| f64_bits(rng)),
            intrinsics: std::array::from_fn(|_| f32_bits(rng)),
            width: rng.gen(),
            height: rng.gen(),
            crop: rng.gen::<bool>().then(|| std::array::from_fn(|_| f32_bits(rng))),
        }),
        TYPE_RENDER_STAGE => {
            let width = rng.gen_range(0..12u16);
            let height = rng.gen_range(0..12u16);
            let n = width as usize * height as usize;
            Message::RenderStage(RenderStageMsg {
                request_id: rng.gen(),
                stage: StageKind::ALL[rng.gen_range(0..3)],
                width,
                height,
                render_time_us: rng.gen(),
                rgb: (0..n * 3).map(|_| rng.gen()).collect(),
                depth: rng.gen::<bool>().then(|| (0..n).map(|_| f32_bits(rng)).collect()),
            })
        }
        TYPE_CANCEL => Message::Cancel { request_id: rng.gen() },
        TYPE_STATS => Message::Stats(StatsMsg::from_array(rng.gen())),
        TYPE_FRAME_PUSH => Message::FramePush(FramePushMsg {
            camera_id: {
                let mut s = text(rng, 20);
                while s.len() > 255 {
                    s.pop();
                }
                s
            },
            seq: rng.gen(),
            timestamp: f64_bits(rng),
            intrinsics: std::array::from_fn(|_| f64_bits(rng)),
            width: rng.gen(),
            height: rng.gen(),
            distortion: std::array::from_fn(|_| f64_bits(rng)),
            pose: std::array::from_fn(|_| f64_bits(rng)),
            depth_scale: f64_bits(rng),
            rgb_png: bytes(rng, 64),
            depth_png: rng.gen::<bool>().then(|| bytes(rng, 64)),
        }),
        TYPE_ERROR => Message::Error(ErrorMsg {
            request_id: rng.gen(),
            code: [
                ErrorCode::Protocol,
                ErrorCode::Stale,
                ErrorCode::Backend,
                ErrorCode::Invalid,
                ErrorCode::Render,
                ErrorCode::Busy,
                ErrorCode::Ingest,
            ][rng.gen_range(0..7)],
            message: text(rng, 40),
        }),
        other => panic!("no generator for type {other}"),
    }
}
