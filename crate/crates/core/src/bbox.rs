use serde::{Deserialize, Serialize};

/// Axis-aligned box in input-image pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Strict interior test.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x > self.x1 && x < self.x2 && y > self.y1 && y < self.y2
    }

    pub fn clamp(&self, w: f64, h: f64) -> BBox {
        BBox::new(
            self.x1.clamp(0.0, w),
            self.y1.clamp(0.0, h),
            self.x2.clamp(0.0, w),
            self.y2.clamp(0.0, h),
        )
    }

    pub fn intersection(&self, o: &BBox) -> f64 {
        let w = (self.x2.min(o.x2) - self.x1.max(o.x1)).max(0.0);
        let h = (self.y2.min(o.y2) - self.y1.max(o.y1)).max(0.0);
        w * h
    }

    pub fn iou(&self, o: &BBox) -> f64 {
        let inter = self.intersection(o);
        let union = self.area() + o.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class_id: usize,
    pub bbox: BBox,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

/// Value with its partial derivatives w.r.t. the four predicted coordinates.
#[derive(Clone, Copy, Debug)]
struct Dual {
    v: f64,
    d: [f64; 4],
}

impl Dual {
    fn c(v: f64) -> Self {
        Dual { v, d: [0.0; 4] }
    }

    fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; 4];
        d[i] = 1.0;
        Dual { v, d }
    }

    fn map(self, v: f64, k: f64) -> Self {
        Dual {
            v,
            d: self.d.map(|x| x * k),
        }
    }

    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: [0, 1, 2, 3].map(|i| self.d[i] + o.d[i]),
        }
    }

    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: [0, 1, 2, 3].map(|i| self.d[i] - o.d[i]),
        }
    }

    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: [0, 1, 2, 3].map(|i| self.d[i] * o.v + o.d[i] * self.v),
        }
    }

    fn div(self, o: Dual) -> Dual {
        Dual {
            v: self.v / o.v,
            d: [0, 1, 2, 3].map(|i| (self.d[i] * o.v - o.d[i] * self.v) / (o.v * o.v)),
        }
    }

    fn max(self, o: Dual) -> Dual {
        if self.v >= o.v {
            self
        } else {
            o
        }
    }

    fn min(self, o: Dual) -> Dual {
        if self.v <= o.v {
            self
        } else {
            o
        }
    }

    fn relu(self) -> Dual {
        if self.v > 0.0 {
            self
        } else {
            Dual::c(0.0)
        }
    }

    fn sq(self) -> Dual {
        self.mul(self)
    }

    /// atan2(self, o) for the positive quadrant used by aspect ratios.
    fn atan2(self, o: Dual) -> Dual {
        let r2 = self.v * self.v + o.v * o.v;
        let (a, b) = if r2 > 0.0 { (o.v / r2, -self.v / r2) } else { (0.0, 0.0) };
        Dual {
            v: self.v.atan2(o.v),
            d: [0, 1, 2, 3].map(|i| a * self.d[i] + b * o.d[i]),
        }
    }
}

/// IoU and complete-IoU loss of `pred` against `gt`.
#[derive(Clone, Copy, Debug)]
pub struct CiouResult {
    pub iou: f64,
    pub loss: f64,
    /// d loss / d (x1, y1, x2, y2) of the prediction.
    pub grad: [f64; 4],
}

/// `1 - IoU + rho^2 / c^2 + alpha * v` with
/// `v = 4/pi^2 (atan(w_g/h_g) - atan(w_p/h_p))^2` and `alpha = v / (1 - IoU + v)`.
/// The gradient includes the dependence of `alpha` on the prediction.
pub fn ciou(pred: &BBox, gt: &BBox) -> CiouResult {
    let [px1, py1, px2, py2] = [0, 1, 2, 3].map(|i| Dual::var(pred.to_array()[i], i));
    let [gx1, gy1, gx2, gy2] = gt.to_array().map(Dual::c);
    let pw = px2.sub(px1);
    let ph = py2.sub(py1);
    let gw = gx2.sub(gx1);
    let gh = gy2.sub(gy1);
    let iw = px2.min(gx2).sub(px1.max(gx1)).relu();
    let ih = py2.min(gy2).sub(py1.max(gy1)).relu();
    let inter = iw.mul(ih);
    let union = pw.mul(ph).add(gw.mul(gh)).sub(inter);
    let iou = if union.v > 0.0 { inter.div(union) } else { Dual::c(0.0) };
    let cw = px2.max(gx2).sub(px1.min(gx1));
    let ch = py2.max(gy2).sub(py1.min(gy1));
    let c2 = cw.sq().add(ch.sq());
    let two = Dual::c(2.0);
    let dx = px1.add(px2).sub(gx1).sub(gx2).div(two);
    let dy = py1.add(py2).sub(gy1).sub(gy2).div(two);
    let rho2 = dx.sq().add(dy.sq());
    let dist = if c2.v > 0.0 { rho2.div(c2) } else { Dual::c(0.0) };
    let k = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let dat = gw.atan2(gh).sub(pw.atan2(ph));
    let v = dat.sq().map(k * dat.v * dat.v, k);
    let denom = Dual::c(1.0).sub(iou).add(v);
    let alpha = if denom.v > 0.0 { v.div(denom) } else { Dual::c(0.0) };
    let loss = Dual::c(1.0).sub(iou).add(dist).add(alpha.mul(v));
    CiouResult {
        iou: iou.v,
        loss: loss.v,
        grad: loss.d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_fixture() {
        let a = BBox::new(0., 0., 2., 2.);
        let b = BBox::new(1., 1., 3., 3.);
        assert!((a.iou(&b) - 1.0 / 7.0).abs() < 1e-12);
        assert!((ciou(&a, &b).iou - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        let a = BBox::new(1., 2., 5., 9.);
        let r = ciou(&a, &a);
        assert_eq!(r.iou, 1.0);
        assert!(r.loss.abs() < 1e-15);
        let far = BBox::new(10., 10., 11., 11.);
        let r = ciou(&BBox::new(0., 0., 1., 1.), &far);
        assert_eq!(r.iou, 0.0);
        assert!(r.loss > 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let gt = BBox::new(2.0, 1.0, 7.0, 4.5);
        let p = [1.3, 0.2, 5.9, 5.1];
        let r = ciou(&BBox::from_array(p), &gt);
        for i in 0..4 {
            let h = 1e-6;
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let fd = (ciou(&BBox::from_array(a), &gt).loss - ciou(&BBox::from_array(b), &gt).loss) / (2.0 * h);
            assert!((fd - r.grad[i]).abs() < 1e-7, "{i}: {fd} vs {}", r.grad[i]);
        }
    }
}
