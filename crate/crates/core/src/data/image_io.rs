use std::path::Path;

use image::{DynamicImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

/// Decode an 8-bit RGB PNG into a `(1,3,H,W)` tensor in `[0,1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let decoded = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?;
    let rgb = match decoded {
        DynamicImage::ImageRgb8(buf) => buf,
        other => {
            return Err(Error::NotRgb {
                path: path.to_path_buf(),
                found: format!("{:?}", other.color()),
            })
        }
    };
    Ok(rgb_to_tensor(&rgb))
}

pub(crate) fn rgb_to_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = f32::from(px[c]) / 255.0;
        }
    }
    Tensor::from_vec(Shape([1, 3, h, w]), data).expect("rgb length")
}

/// Quantize a `(1,3,H,W)` tensor to 8-bit RGB: `round(clamp(v, 0, 1)·255)`.
pub fn tensor_to_rgb<T: Element>(t: &Tensor<T>) -> Result<RgbImage> {
    let [n, c, h, w] = t.shape().0;
    if n != 1 || c != 3 {
        return Err(Error::InvalidShape {
            op: "save_image",
            msg: format!("expected (1,3,H,W), got {}", t.shape()),
        });
    }
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb(std::array::from_fn(|ch| {
            (t.at(0, ch, y, x).as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
        }))
    }))
}

pub fn save_image<T: Element>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = tensor_to_rgb(t)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Encode {
            path: path.to_path_buf(),
            source,
        })
}
