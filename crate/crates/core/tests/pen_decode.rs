mod oracles;

#[test]
fn integral_decode_recovers_gaussian_means() {
    oracles::integral_decode_gaussians(100);
}
