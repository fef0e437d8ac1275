use proptest::prelude::*;
use surrogate::image::{decode, encode_floatmap, encode_pixmap};
use surrogate::manifest::Fractions;
use surrogate_core::Tensor;

fn levels() -> impl Strategy<Value = Tensor> {
    (prop_oneof![Just(1usize), Just(3)], 1..=9usize, 1..=9usize).prop_flat_map(|(c, h, w)| {
        proptest::collection::vec(0u8..=255, c * h * w).prop_map(move |v| {
            Tensor::from_vec([1, c, h, w], v.into_iter().map(|b| b as f32 / 255.0).collect()).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn eight_bit_images_survive_encoding(x in levels()) {
        let back = decode(&encode_pixmap(&x).unwrap()).unwrap();
        prop_assert!(back.bit_eq(&x));
    }

    #[test]
    fn float_maps_are_exact(x in levels(), k in 0.0f32..4.0) {
        let y = x.map(|v| v * k - 1.0);
        prop_assert!(decode(&encode_floatmap(&y).unwrap()).unwrap().bit_eq(&y));
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64), head in 0usize..4) {
        let mut data = [b"P6\n2 2\n255\n".as_slice(), b"P5 1 1 255 ", b"Pf\n1 1\n-1.0\n", b""][head].to_vec();
        data.extend(bytes);
        let _ = decode(&data);
    }

    #[test]
    fn split_counts_cover_every_item(n in 0usize..100_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (train, val) = (a, (1.0 - a) * b);
        let f = Fractions::new(train, val, 1.0 - train - val).unwrap();
        prop_assert_eq!(f.counts(n).iter().sum::<usize>(), n);
    }
}
