use adrive::channel::{decode, encode, Beacon, CodecError, FRAME_LEN};
use adrive::geometry::Point;
use adrive::vehicle::VehicleState;
use proptest::prelude::*;

fn beacon() -> impl Strategy<Value = Beacon> {
    (
        any::<u32>(),
        0.0f64..1e5,
        (-9.9e5f64..9.9e5, -9.9e5f64..9.9e5),
        -10.0f64..10.0,
        -99.0f64..99.0,
        0usize..6,
        any::<bool>(),
        0.0f64..1e4,
        0.0f64..1.0,
        any::<bool>(),
    )
        .prop_map(|(sender, timestamp, (x, y), heading, velocity, st, rho, chi, r, hv_flag)| Beacon {
            sender,
            timestamp,
            position: Point::new(x, y),
            heading,
            velocity,
            state: VehicleState::ALL[st],
            rho,
            chi,
            r,
            hv_flag,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip_is_bit_exact(b in beacon()) {
        let frame = encode(&b).unwrap();
        prop_assert_eq!(frame.len(), FRAME_LEN);
        let back = decode(&frame).unwrap();
        prop_assert_eq!(encode(&back).unwrap(), frame);
        prop_assert_eq!(back, b);
    }
}

#[test]
fn frame_length_is_fixed() {
    assert_eq!(FRAME_LEN, 64);
    assert_eq!(encode(&Beacon::default()).unwrap().len(), FRAME_LEN);
}

#[test]
fn bad_frames_are_rejected() {
    let frame = encode(&Beacon::default()).unwrap();
    assert_eq!(decode(&frame[..63]), Err(CodecError::BadLength(63)));
    let mut bad = frame;
    bad[0] = 0;
    assert!(matches!(decode(&bad), Err(CodecError::BadMagic(0))));
    let mut bad = frame;
    bad[45] = 9;
    assert!(matches!(decode(&bad), Err(CodecError::BadByte { field: "state", .. })));
}

#[test]
fn out_of_range_fields_are_rejected() {
    let far = Beacon {
        position: Point::new(2e6, 0.0),
        ..Beacon::default()
    };
    assert!(matches!(encode(&far), Err(CodecError::OutOfRange("x"))));
    let fast = Beacon {
        velocity: 150.0,
        ..Beacon::default()
    };
    assert!(matches!(encode(&fast), Err(CodecError::OutOfRange("velocity"))));
}
