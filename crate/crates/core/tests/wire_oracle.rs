use mirrorboard_core::wire::{decode_flake, encode_flake, split_stream, DeliveryClass, Flake, FrameBuffer, Payload};
use mirrorboard_testkit::{crc32_bitwise, encode_packet};
use proptest::prelude::*;

fn raw_data(p: &Payload) -> Vec<u8> {
    let mut out = Vec::new();
    match p {
        Payload::Vec3(v) => v.iter().flatten().for_each(|f| out.extend(f.to_bits().to_be_bytes())),
        Payload::Vec4(v) => v.iter().flatten().for_each(|f| out.extend(f.to_bits().to_be_bytes())),
        Payload::Floats(v) => v.iter().for_each(|f| out.extend(f.to_bits().to_be_bytes())),
        Payload::Ints(v) => v.iter().for_each(|i| out.extend(i.to_be_bytes())),
        Payload::Bytes(b) => out.extend(b),
        Payload::Text(s) => out.extend(s.as_bytes()),
    }
    out
}

fn name() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9._*-]{1,24}"
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        prop::collection::vec(any::<[f32; 3]>(), 0..8).prop_map(Payload::Vec3),
        prop::collection::vec(any::<[f32; 4]>(), 0..8).prop_map(Payload::Vec4),
        prop::collection::vec(any::<u8>(), 0..64).prop_map(Payload::Bytes),
        prop::collection::vec(any::<f32>(), 0..16).prop_map(Payload::Floats),
        prop::collection::vec(any::<i32>(), 0..16).prop_map(Payload::Ints),
        ".{0,32}".prop_map(Payload::Text),
    ]
}

fn flake() -> impl Strategy<Value = Flake> {
    (name(), name(), name(), any::<bool>(), any::<u32>(), payload()).prop_map(|(s, l, o, ev, seq, p)| {
        let class = if ev { DeliveryClass::Event } else { DeliveryClass::State };
        Flake::new(s, l, o, class, seq, p)
    })
}

#[test]
fn crc_matches_reference() {
    for data in [&b""[..], b"a", b"123456789", &[0xFF; 300]] {
        assert_eq!(crc32fast::hash(data), crc32_bitwise(data));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn encoder_matches_reference(f in flake()) {
        let ours = encode_flake(&f).unwrap();
        let class = match f.class { DeliveryClass::State => 0, DeliveryClass::Event => 1 };
        let theirs = encode_packet(
            &f.scope, &f.label, &f.origin, class, f.seq,
            f.payload.tag() as u8, f.payload.count() as u32, &raw_data(&f.payload),
        );
        prop_assert_eq!(&ours, &theirs);
        let back = decode_flake(&ours).unwrap();
        prop_assert_eq!(encode_flake(&back).unwrap(), ours);
    }

    #[test]
    fn mutated_packets_never_panic(f in flake(), idx in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut bytes = encode_flake(&f).unwrap();
        let i = idx.index(bytes.len());
        bytes[i] = byte;
        let _ = decode_flake(&bytes);
        let _ = decode_flake(&bytes[..i]);
    }

    #[test]
    fn chunking_is_invisible(flakes in prop::collection::vec(flake(), 1..20), cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..10)) {
        let packets: Vec<Vec<u8>> = flakes.iter().map(|f| encode_flake(f).unwrap()).collect();
        let stream: Vec<u8> = packets.concat();
        let mut points: Vec<usize> = cuts.iter().map(|c| c.index(stream.len() + 1)).collect();
        points.push(0);
        points.push(stream.len());
        points.sort_unstable();
        let mut fb = FrameBuffer::new();
        let mut got = Vec::new();
        for w in points.windows(2) {
            got.extend(fb.push(&stream[w[0]..w[1]]).unwrap());
        }
        prop_assert_eq!(fb.pending(), 0);
        prop_assert_eq!(&got, &packets);
        let (whole, rest) = split_stream(&stream).unwrap();
        prop_assert!(rest.is_empty());
        prop_assert_eq!(whole.len(), packets.len());
    }
}
