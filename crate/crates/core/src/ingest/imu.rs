use serde::{Deserialize, Serialize};

use super::{parse_f64, CheckInvariants, ParseError, Timestamped};

/// Accelerations beyond ~16 g are treated as encoding garbage.
pub const ACCEL_SANITY_BOUND: f64 = 160.0;

/// One IMU sample in the device frame: accel m/s², gyro rad/s, mag µT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
    pub mag: [f64; 3],
}

impl ImuSample {
    pub fn accel_norm(&self) -> f64 {
        self.accel.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

impl Timestamped for ImuSample {
    fn t(&self) -> f64 {
        self.t
    }
    fn set_t(&mut self, t: f64) {
        self.t = t;
    }
}

impl CheckInvariants for ImuSample {
    fn check_invariants(&self) -> Result<(), String> {
        let all_finite = std::iter::once(self.t)
            .chain(self.accel)
            .chain(self.gyro)
            .chain(self.mag)
            .all(f64::is_finite);
        if !all_finite {
            return Err("non-finite component".into());
        }
        if self.accel_norm() >= ACCEL_SANITY_BOUND {
            return Err(format!("|accel| = {:.1} m/s² exceeds sanity bound", self.accel_norm()));
        }
        Ok(())
    }
}

const FIELDS: [&str; 10] = ["t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"];

/// `t,ax,ay,az,gx,gy,gz,mx,my,mz`
pub fn parse_imu_record(line: &str) -> Result<ImuSample, ParseError> {
    let mut v = [0.0f64; 10];
    let mut n = 0;
    for (i, field) in line.split(',').enumerate() {
        if i < 10 {
            v[i] = parse_f64(FIELDS[i], field)?;
        }
        n += 1;
    }
    if n != 10 {
        return Err(ParseError::FieldCount {
            expected: 10,
            got: n,
        });
    }
    let s = ImuSample {
        t: v[0],
        accel: [v[1], v[2], v[3]],
        gyro: [v[4], v[5], v[6]],
        mag: [v[7], v[8], v[9]],
    };
    s.check_invariants().map_err(ParseError::Invariant)?;
    Ok(s)
}

pub fn encode_imu_record(s: &ImuSample) -> String {
    format!(
        "{:.4},{:.4},{:.4},{:.4},{:.5},{:.5},{:.5},{:.2},{:.2},{:.2}",
        s.t,
        s.accel[0],
        s.accel[1],
        s.accel[2],
        s.gyro[0],
        s.gyro[1],
        s.gyro[2],
        s.mag[0],
        s.mag[1],
        s.mag[2]
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_and_braking() {
        let s = parse_imu_record("0.00,0,0,9.81,0,0,0,20,0,40").unwrap();
        assert_eq!(s.accel_norm(), 9.81);
        assert_eq!(s.mag, [20.0, 0.0, 40.0]);
        let b = parse_imu_record("1.50,-4.0,0,9.81,0,0,0,20,0,40").unwrap();
        assert_eq!(b.t, 1.5);
        assert_eq!(b.accel[0], -4.0);
    }

    #[test]
    fn field_errors() {
        assert_eq!(
            parse_imu_record("0.00,0,0,9.81,0,0,0,20,0"),
            Err(ParseError::FieldCount { expected: 10, got: 9 })
        );
        assert!(matches!(
            parse_imu_record("0.00,0,0,9.81,0,0,zero,20,0,40"),
            Err(ParseError::NonNumeric { field: "gz", .. })
        ));
        assert!(matches!(
            parse_imu_record("0.00,0,0,200,0,0,0,20,0,40"),
            Err(ParseError::Invariant(_))
        ));
        assert!(matches!(
            parse_imu_record("0.00,NaN,0,9.8,0,0,0,20,0,40"),
            Err(ParseError::NonNumeric { .. })
        ));
    }
}
