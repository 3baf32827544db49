//! Capability and temporal aggregation matrices, the Kronecker measurement
//! operator they induce, and downsampling of weekly data to months.

use hfgse::wlse::{
    build_capability_aggregation, build_temporal_aggregation, downsample_fine_data,
    AggregationMatrices, FineSeries,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two series over four capabilities; quarterly buckets over six months
    let d_cap = build_capability_aggregation(&[vec![0, 1], vec![2, 3]], 4)?;
    let d_time = build_temporal_aggregation(6, &[vec![1, 2, 3], vec![4, 5, 6]])?;
    let agg = AggregationMatrices::new(d_cap, d_time);
    println!(
        "D_u is {:?} with {} entries",
        agg.d_u.shape(),
        agg.d_u.nnz()
    );

    // flows u[c][k] = c + k/10, stacked column-major as vec(U)
    let u: Vec<Vec<f64>> = (0..4)
        .map(|c| (0..6).map(|k| c as f64 + k as f64 / 10.0).collect())
        .collect();
    let vec_u: Vec<f64> = (0..6)
        .flat_map(|k| u.iter().map(move |row| row[k]))
        .collect();
    let via_kron = agg.d_u.mul_vec(&vec_u)?;
    let (cap, time) = (agg.d_cap.to_dense(), agg.d_time.to_dense());
    let mut direct = Vec::new();
    for d in 0..2 {
        for m in 0..2 {
            let mut s = 0.0;
            for c in 0..4 {
                for k in 0..6 {
                    s += cap[m][c] * u[c][k] * time[k][d];
                }
            }
            direct.push(s);
        }
    }
    println!("D_u vec(U)            = {via_kron:?}");
    println!("vec(D_cap U D_time)   = {direct:?}");

    let weekly = FineSeries {
        id: "elec".into(),
        capabilities: vec!["load".into()],
        values: vec![1.0; 9],
        samples_per_step: vec![4, 5],
    };
    let monthly = downsample_fine_data(&weekly, 2)?;
    println!("weekly samples summed per month: {:?}", monthly.values);
    Ok(())
}
